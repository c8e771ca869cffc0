#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "ncairfl/model.hpp"

namespace ncairfl {
namespace {

// Straight loops, no Eigen products.
double naive_loss(const MlpParams& p, const FeatureMatrix& x, const std::vector<int>& y) {
  const int in = static_cast<int>(p.w1.rows()), hid = static_cast<int>(p.w1.cols()),
            out = static_cast<int>(p.w2.cols());
  double total = 0.0;
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    std::vector<double> h(static_cast<std::size_t>(hid));
    for (int j = 0; j < hid; ++j) {
      double a = p.b1(j);
      for (int i = 0; i < in; ++i) a += x(s, i) * p.w1(i, j);
      h[static_cast<std::size_t>(j)] = a > 0.0 ? a : 0.0;
    }
    std::vector<double> z(static_cast<std::size_t>(out));
    for (int k = 0; k < out; ++k) {
      double a = p.b2(k);
      for (int j = 0; j < hid; ++j) a += h[static_cast<std::size_t>(j)] * p.w2(j, k);
      z[static_cast<std::size_t>(k)] = a;
    }
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    total += -(z[static_cast<std::size_t>(y[static_cast<std::size_t>(s)])] - std::log(denom));
  }
  return total / static_cast<double>(x.rows());
}

MlpParams random_params(const MlpShape& s, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed);
  MlpParams p = init_params(s, rng);
  p.w1 *= scale;
  p.w2 *= scale;
  for (Eigen::Index k = 0; k < p.b1.size(); ++k) p.b1(k) = rng.uniform(-0.1, 0.1);
  for (Eigen::Index k = 0; k < p.b2.size(); ++k) p.b2(k) = rng.uniform(-0.1, 0.1);
  return p;
}

Batch random_batch(int dims, int rows, std::uint64_t seed) {
  RngStream rng(seed);
  Batch b;
  b.features.resize(rows, dims);
  for (Eigen::Index k = 0; k < b.features.size(); ++k) b.features.data()[k] = rng.uniform();
  for (int r = 0; r < rows; ++r) b.labels.push_back(static_cast<int>(rng.below(kNumClasses)));
  return b;
}

TEST(Mlp, PaperShapeHas79510Parameters) { EXPECT_EQ(MlpShape{}.param_count(), 79510); }

TEST(Mlp, FlattenRoundTrip) {
  const MlpShape s{7, 5, 10};
  const MlpParams p = random_params(s, 1);
  const ParamVector v = p.flatten();
  ASSERT_EQ(v.size(), s.param_count());
  EXPECT_TRUE(MlpParams::unflatten(s, v).flatten() == v);
  // w1 leads, row-major.
  EXPECT_EQ(v(1), p.w1(0, 1));
  EXPECT_EQ(v(s.param_count() - 1), p.b2(9));
  EXPECT_THROW(MlpParams::unflatten(s, ParamVector::Zero(3)), DimensionError);
}

TEST(Mlp, ZeroParamsGiveUniformPrediction) {
  const MlpShape s{6, 4, 10};
  const Batch b = random_batch(6, 9, 2);
  const auto res = forward_loss(MlpParams::zeros(s), b);
  EXPECT_NEAR(res.loss, std::log(10.0), 1e-12);
  EXPECT_TRUE(((res.probabilities.array() - 0.1).abs() < 1e-15).all());
}

TEST(Mlp, ForwardMatchesNaiveLoops) {
  const MlpShape s{12, 8, 10};
  const MlpParams p = random_params(s, 3, 2.0);
  const Batch b = random_batch(12, 17, 4);
  EXPECT_NEAR(forward_loss(p, b).loss, naive_loss(p, b.features, b.labels), 1e-12);
}

TEST(Mlp, DuplicatedBatchKeepsLossAndGradient) {
  const MlpShape s{5, 6, 10};
  const MlpParams p = random_params(s, 5);
  const Batch b = random_batch(5, 8, 6);
  Batch twice;
  twice.features.resize(16, 5);
  twice.features << b.features, b.features;
  twice.labels = b.labels;
  twice.labels.insert(twice.labels.end(), b.labels.begin(), b.labels.end());
  EXPECT_NEAR(forward_loss(p, b).loss, forward_loss(p, twice).loss, 1e-14);
  EXPECT_LT((gradient(p, b).flatten() - gradient(p, twice).flatten()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Mlp, ZeroFeaturesGiveZeroFirstLayerWeightGradient) {
  const MlpShape s{4, 3, 10};
  const MlpParams p = random_params(s, 7);
  Batch b = random_batch(4, 5, 8);
  b.features.setZero();
  EXPECT_EQ(gradient(p, b).w1.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, GradientMatchesCentralDifferences) {
  const MlpShape s{6, 5, 10};
  const MlpParams p = random_params(s, 9, 1.5);
  const Batch b = random_batch(6, 11, 10);
  const ParamVector theta = p.flatten();
  const ParamVector g = gradient(p, b).flatten();
  const double h = 1e-5;
  ParamVector fd(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    ParamVector up = theta, down = theta;
    up(k) += h;
    down(k) -= h;
    fd(k) = (forward_loss(MlpParams::unflatten(s, up), b).loss -
             forward_loss(MlpParams::unflatten(s, down), b).loss) / (2.0 * h);
  }
  EXPECT_LT((fd - g).norm() / g.norm(), 1e-5);
}

TEST(Mlp, HugeWeightsRaiseNumericOverflow) {
  const MlpShape s{3, 2, 10};
  MlpParams p = MlpParams::zeros(s);
  p.w1.setConstant(1e300);
  p.w2.setConstant(1e300);
  Batch b = random_batch(3, 2, 11);
  b.features.setOnes();
  EXPECT_THROW(forward_loss(p, b), NumericOverflowError);
}

TEST(Mlp, MismatchedBatchIsRejected) {
  const MlpShape s{3, 2, 10};
  Batch b = random_batch(4, 2, 12);
  EXPECT_THROW(forward_loss(MlpParams::zeros(s), b), DimensionError);
}

struct LocalFixture : ::testing::Test {
  MlpShape shape{8, 6, 10};
  Dataset data;
  DevicePartition part{0, {}};
  ParamVector theta0;

  void SetUp() override {
    RngStream rng(20);
    data = synth_blobs(8, 200, rng);
    for (std::size_t k = 0; k < 120; ++k) part.sample_indices.push_back(k);
    theta0 = random_params(shape, 21).flatten();
  }
};

TEST_F(LocalFixture, ZeroLearningRateGivesZeroDelta) {
  RngStream rng(22);
  const auto res = local_update(shape, theta0, data, part, 4, 0.0, 16, rng);
  EXPECT_EQ(res.delta.cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(LocalFixture, SingleStepIsScaledGradient) {
  RngStream rng(23), replay(23);
  const double eta = 0.07;
  const auto res = local_update(shape, theta0, data, part, 1, eta, 16, rng);
  const Batch b = sample_batch(data, part, 16, replay);
  const ParamVector expect = eta * gradient(MlpParams::unflatten(shape, theta0), b).flatten();
  EXPECT_LT((res.delta - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST_F(LocalFixture, ThreeStepsMatchHandUnrolledLoop) {
  RngStream rng(24), replay(24);
  const double eta = 0.05;
  const auto res = local_update(shape, theta0, data, part, 3, eta, 16, rng);
  ParamVector theta = theta0;
  double bound = 0.0;
  for (int q = 0; q < 3; ++q) {
    const Batch b = sample_batch(data, part, 16, replay);
    const ParamVector g = gradient(MlpParams::unflatten(shape, theta), b).flatten();
    bound += g.norm();
    theta -= eta * g;
  }
  EXPECT_LT((res.delta - (theta0 - theta)).cwiseAbs().maxCoeff(), 1e-14);
  // ||delta|| <= eta * sum of step gradient norms
  EXPECT_LE(res.delta.norm(), eta * bound * (1.0 + 1e-12));
  EXPECT_EQ(res.step_grad_norms.size(), 3u);
}

TEST_F(LocalFixture, SameSeedSameDelta) {
  RngStream a(25), b(25);
  const auto ra = local_update(shape, theta0, data, part, 2, 0.1, 16, a);
  const auto rb = local_update(shape, theta0, data, part, 2, 0.1, 16, b);
  EXPECT_TRUE(ra.delta == rb.delta);
}

TEST(Evaluate, ZeroParamsPredictTheFirstClass) {
  const MlpShape s{3, 2, 10};
  Dataset ds;
  ds.features = FeatureMatrix::Zero(20, 3);
  for (int k = 0; k < 20; ++k) ds.labels.push_back(k % 4);
  const auto ev = evaluate(s, ParamVector::Zero(s.param_count()), ds, 7);
  EXPECT_DOUBLE_EQ(ev.accuracy, 5.0 / 20.0);
  EXPECT_NEAR(ev.loss, std::log(10.0), 1e-12);
}

TEST(Evaluate, ChunkSizeDoesNotChangeResult) {
  const MlpShape s{8, 6, 10};
  RngStream rng(30);
  const Dataset ds = synth_blobs(8, 101, rng);
  const ParamVector theta = random_params(s, 31).flatten();
  const auto a = evaluate(s, theta, ds, 2000);
  const auto b = evaluate(s, theta, ds, 13);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
}

}  // namespace
}  // namespace ncairfl
