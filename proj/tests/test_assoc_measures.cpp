#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "smrmr/assoc_measures.hpp"

using namespace smrmr;

namespace {

Sample vec(std::initializer_list<double> v) {
  Sample s(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) s[i++] = d;
  return s;
}

}  // namespace

TEST(GaussianKernel, ConstantSampleGivesOnes) {
  const Matrix k = gaussian_kernel_matrix(vec({0, 0, 0}), 0.7);
  EXPECT_TRUE(k.isApprox(Matrix::Ones(3, 3)));
}

TEST(GaussianKernel, UnitDistance) {
  const Matrix k = gaussian_kernel_matrix(vec({0, 1}), 1.0);
  EXPECT_NEAR(k(0, 1), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(k(0, 1), 0.60653, 1e-5);
  EXPECT_EQ(k(0, 0), 1.0);
}

TEST(GaussianKernel, MedianHeuristicBandwidth) {
  const Sample x = vec({0, 1, 2});
  const double h = median_heuristic_bandwidth(x);
  EXPECT_DOUBLE_EQ(h, 1.0);
  EXPECT_NEAR(gaussian_kernel_matrix(x, h)(0, 2), std::exp(-2.0), 1e-15);
}

TEST(GaussianKernel, RejectsNonFinite) {
  EXPECT_THROW(gaussian_kernel_matrix(vec({0, NAN}), 1.0), Error);
  EXPECT_THROW(gaussian_kernel_matrix(vec({0, 1}), 0.0), Error);
}

TEST(MedianHeuristic, Examples) {
  EXPECT_DOUBLE_EQ(median_heuristic_bandwidth(vec({0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(median_heuristic_bandwidth(vec({0, 1, 2})), 1.0);
  try {
    median_heuristic_bandwidth(vec({3, 3, 3}));
    FAIL() << "expected DegenerateFeature";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFeature);
  }
}

TEST(MedianHeuristic, FallsBackToSmallestPositiveDistance) {
  // Pairs: five zeros, then 2,2,2,2... median is 0.
  const double h = median_heuristic_bandwidth(vec({1, 1, 1, 1, 3}));
  EXPECT_DOUBLE_EQ(h, 2.0);
}

TEST(CenterGram, Examples) {
  const CenteredGram ones = center_gram(Matrix::Ones(4, 4));
  EXPECT_LT(ones.entries.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(ones.frob, 0.0);

  const CenteredGram id = center_gram(Matrix::Identity(2, 2));
  Matrix expect(2, 2);
  expect << 0.5, -0.5, -0.5, 0.5;
  EXPECT_LT((id.entries - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CenterGram, RowAndColumnSumsVanish) {
  std::mt19937_64 rng(11);
  for (int n : {2, 7, 50, 2000}) {
    const Sample x = oracle::normal_vector(rng, n);
    const CenteredGram c = center_gram(gaussian_kernel_matrix(x, 1.0));
    EXPECT_LT(c.entries.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10) << n;
    EXPECT_LT(c.entries.colwise().sum().cwiseAbs().maxCoeff(), 1e-10) << n;
  }
}

TEST(CenterGram, MatchesExplicitHKH) {
  std::mt19937_64 rng(3);
  const Sample x = oracle::normal_vector(rng, 9);
  const Matrix k = gaussian_kernel_matrix(x, 0.8);
  const Matrix h = Matrix::Identity(9, 9) - Matrix::Constant(9, 9, 1.0 / 9.0);
  EXPECT_LT((center_gram(k).entries - h * k * h).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(HsicV, ConstantResponseGivesZero) {
  std::mt19937_64 rng(5);
  const Sample x = oracle::normal_vector(rng, 10);
  const CenteredGram kc = center_gram(gaussian_kernel_matrix(x, 1.0));
  const CenteredGram lc = center_gram(gaussian_kernel_matrix(Sample::Constant(10, 2.0), 1.0));
  EXPECT_NEAR(hsic_v(kc, lc), 0.0, 1e-15);
}

TEST(HsicV, SelfIsScaledSquaredNorm) {
  std::mt19937_64 rng(6);
  const Sample x = oracle::normal_vector(rng, 12);
  const CenteredGram kc = center_gram(gaussian_kernel_matrix(x, 1.0));
  EXPECT_NEAR(hsic_v(kc, kc), kc.frob * kc.frob / 144.0, 1e-14);
  EXPECT_GT(hsic_v(kc, kc), 0.0);
}

TEST(HsicV, MatchesThreeSumForm) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(2, 12);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = size(rng);
    const Sample x = oracle::normal_vector(rng, n);
    const Sample y = oracle::normal_vector(rng, n) + x.array().square().matrix();
    const Matrix k = oracle::gauss_gram(x, 1.0), l = oracle::gauss_gram(y, 0.6);
    const double v = hsic_v(center_gram(k), center_gram(l));
    EXPECT_NEAR(v, oracle::hsic_sums(k, l), 1e-10);
    EXPECT_GE(v, -1e-15);
  }
}

TEST(HsicV, DimensionMismatch) {
  EXPECT_THROW(hsic_v(center_gram(Matrix::Identity(3, 3)), center_gram(Matrix::Identity(4, 4))), Error);
}

TEST(HsicU, MatchesTupleEnumeration) {
  std::mt19937_64 rng(8);
  for (int n : {4, 5, 7}) {
    const Sample x = oracle::normal_vector(rng, n);
    const Sample y = oracle::normal_vector(rng, n) - x;
    const Matrix k = oracle::gauss_gram(x, 1.0), l = oracle::gauss_gram(y, 1.3);
    EXPECT_NEAR(hsic_u(k, l), oracle::hsic_u_enumerate(k, l), 1e-12) << n;
  }
}

TEST(HsicU, RejectsTinySamples) {
  EXPECT_THROW(hsic_u(Matrix::Identity(3, 3), Matrix::Identity(3, 3)), Error);
}

TEST(HsicU, UnbiasedUnderIndependence) {
  std::mt19937_64 rng(9);
  const int reps = 400, n = 30;
  double sum = 0, sumsq = 0;
  for (int r = 0; r < reps; ++r) {
    const Sample x = oracle::normal_vector(rng, n), y = oracle::normal_vector(rng, n);
    const double u = hsic_u(gaussian_kernel_matrix(x, 1.0), gaussian_kernel_matrix(y, 1.0));
    sum += u;
    sumsq += u * u;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
  EXPECT_LT(std::abs(mean), 3 * se);
}

TEST(HsicU, VMinusUShrinksWithN) {
  int better = 0;
  const int seeds = 30;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    auto gap = [&](int n) {
      const Sample x = oracle::normal_vector(rng, n);
      const Sample y = x.array().sin().matrix() + 0.5 * oracle::normal_vector(rng, n);
      const Matrix k = gaussian_kernel_matrix(x, 1.0), l = gaussian_kernel_matrix(y, 1.0);
      return std::abs(hsic_v(center_gram(k), center_gram(l)) - hsic_u(k, l));
    };
    const double small = gap(50);
    const double large = gap(400);
    better += large < small;
  }
  EXPECT_GE(better, static_cast<int>(0.9 * seeds));
}

TEST(NrHsic, SelfIsOneAndSymmetric) {
  std::mt19937_64 rng(10);
  const MeasureSpec spec = MeasureSpec::nr_hsic();
  for (int rep = 0; rep < 20; ++rep) {
    const Sample x = oracle::normal_vector(rng, 40), y = oracle::normal_vector(rng, 40);
    EXPECT_NEAR(nr_hsic_v(x, x, spec), 1.0, 1e-12);
    const double a = nr_hsic_v(x, y, spec), b = nr_hsic_v(y, x, spec);
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0 + 1e-12);
  }
}

TEST(NrHsic, ConstantIsDegenerate) {
  try {
    nr_hsic_v(Sample::Constant(5, 1.0), vec({1, 2, 3, 4, 5}), MeasureSpec::nr_hsic());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFeature);
  }
  try {
    nr_hsic_v(Sample::Constant(5, 1.0), vec({1, 2, 3, 4, 5}), MeasureSpec::nr_hsic(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFeature);
  }
}

TEST(NrHsic, SmallUnderIndependence) {
  std::mt19937_64 rng(12);
  int small = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const Sample x = oracle::normal_vector(rng, 200), y = oracle::normal_vector(rng, 200);
    small += nr_hsic_v(x, y, MeasureSpec::nr_hsic()) < 0.1;
  }
  EXPECT_GE(small, 95);
}

TEST(AngleTensor, ScalarAnglesAreZeroOrPi) {
  std::mt19937_64 rng(13);
  const Sample x = oracle::normal_vector(rng, 6);
  for (int r = 0; r < 6; ++r)
    for (int i = 0; i < 6; ++i)
      for (int l = 0; l < 6; ++l) {
        const double a = (i == r || l == r) ? 0.0 : projection_angle(x[i], x[l], x[r]);
        EXPECT_TRUE(a == 0.0 || std::abs(a - std::numbers::pi) < 1e-15);
      }
}

TEST(AngleTensor, HandExample) {
  // Vertex x_3 = 2; x_1 - x_3 = -2 and x_2 - x_3 = -1 point the same way.
  EXPECT_EQ(projection_angle(0.0, 1.0, 2.0), 0.0);
  EXPECT_NEAR(projection_angle(0.0, 2.0, 1.0), std::numbers::pi, 1e-15);
  EXPECT_EQ(projection_angle(1.0, 1.0, 1.0), 0.0);
}

TEST(AngleTensor, SymmetricInFirstTwoIndices) {
  std::mt19937_64 rng(14);
  const AngleTensor t = angle_tensor(oracle::normal_vector(rng, 7));
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t l = 0; l < 7; ++l) EXPECT_EQ(t(i, l, r), t(l, i, r));
}

TEST(AngleTensor, SlicesAreDoubleCentred) {
  std::mt19937_64 rng(15);
  const AngleTensor t = angle_tensor(oracle::normal_vector(rng, 8));
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t i = 0; i < 8; ++i) {
      double row = 0;
      for (std::size_t l = 0; l < 8; ++l) row += t(i, l, r);
      EXPECT_NEAR(row, 0.0, 1e-12);
    }
}

TEST(AngleTensor, RespectsSizeCap) {
  try {
    angle_tensor(Sample::LinSpaced(20, 0, 1), 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ResourceLimit);
  }
  EXPECT_THROW(angle_tensor(vec({1, 2})), Error);
}

TEST(PcSquared, MatchesDefinitionalSums) {
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<int> size(3, 8);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = size(rng);
    const Sample x = oracle::normal_vector(rng, n);
    const Sample y = x.array().cube().matrix() + oracle::normal_vector(rng, n);
    const double ref = oracle::pc_sums(x, y);
    EXPECT_NEAR(pc_squared_v(x, y), ref, 1e-10);
    EXPECT_NEAR(pc_squared_v(angle_tensor(x), angle_tensor(y)), ref, 1e-10);
    EXPECT_NEAR(pcov_v(PcFeature::make(x), PcFeature::make(y)), oracle::pcov_sums(x, y), 1e-10);
  }
}

TEST(PcSquared, HandlesTies) {
  const Sample x = vec({0, 0, 1, 2, 2, 3});
  const Sample y = vec({1, 0, 0, 1, 5, 5});
  EXPECT_NEAR(pc_squared_v(x, y), oracle::pc_sums(x, y), 1e-10);
  EXPECT_NEAR(pc_squared_v(angle_tensor(x), angle_tensor(y)), oracle::pc_sums(x, y), 1e-10);
}

TEST(PcSquared, SelfIsOneSymmetricAndBounded) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Sample x = oracle::normal_vector(rng, 30), y = oracle::normal_vector(rng, 30);
    EXPECT_NEAR(pc_squared_v(x, x), 1.0, 1e-12);
    const double a = pc_squared_v(x, y), b = pc_squared_v(y, x);
    EXPECT_NEAR(a, b, 1e-10);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(PcSquared, ConstantIsDegenerate) {
  try {
    pc_squared_v(Sample::Constant(5, 2.0), vec({1, 2, 3, 4, 5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateFeature);
  }
}

TEST(PcSquared, SmallUnderIndependence) {
  std::mt19937_64 rng(18);
  int small = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const Sample x = oracle::normal_vector(rng, 500), y = oracle::normal_vector(rng, 500);
    small += pc_squared_v(x, y) < 0.05;
  }
  EXPECT_GE(small, 95);
}

TEST(PcSquared, DetectsMonotoneDependence) {
  std::mt19937_64 rng(19);
  const Sample x = oracle::normal_vector(rng, 200);
  EXPECT_NEAR(pc_squared_v(x, x.array().exp().matrix()), 1.0, 1e-12);
  EXPECT_GT(pc_squared_v(x, x.array().square().matrix()), 0.1);
}

TEST(Dependence, SketchDispatch) {
  std::mt19937_64 rng(20);
  const Sample x = oracle::normal_vector(rng, 25), y = oracle::normal_vector(rng, 25);
  EXPECT_NEAR(dependence(x, y, MeasureSpec::pc()), pc_squared_v(x, y), 1e-15);
  EXPECT_NEAR(dependence(x, y, MeasureSpec::nr_hsic()), nr_hsic_v(x, y, MeasureSpec::nr_hsic()), 1e-15);
  EXPECT_THROW(dependence(make_sketch(x, MeasureSpec::pc()), make_sketch(y, MeasureSpec::nr_hsic())), Error);
}
