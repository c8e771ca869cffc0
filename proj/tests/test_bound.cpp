#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ncairfl/bound.hpp"

namespace ncairfl {
namespace {

BoundInputs sample_inputs() {
  BoundInputs in;
  in.L = 2.0;
  in.G2 = 3.0;
  in.sigma_l2 = 0.5;
  in.sigma_g2 = 0.25;
  in.Q = 5;
  in.T = 300;
  in.n = 20;
  in.r = 0.2;
  in.p = 0.5;
  in.snr_min = 0.394;
  in.d = 79510;
  in.f_gap = 2.3;
  in.eta = 0.5 * eta_max(in.Q, in.L);
  return in;
}

// Independent transcription of the four terms.
double reference_total(const BoundInputs& in) {
  const double lam = std::min(in.p, 1.0 - in.p);
  const double gt2 = (8.0 / (lam * lam) - 6.0) * in.Q * in.Q * in.G2;
  const double rn = in.r * in.n;
  const double ge2 = rn * rn * gt2 + 4.0 * rn * gt2 / in.snr_min + gt2 / (in.d * in.snr_min * in.snr_min);
  const double e = in.eta, L = in.L, Q = in.Q;
  return 8.0 * in.f_gap / (in.T * e * Q) + 4.0 * e * L * ge2 / (Q * rn * rn) + 4.0 * e * L * Q * in.G2 +
         40.0 * e * e * Q * L * L * (in.sigma_l2 + 6.0 * Q * in.sigma_g2) +
         48.0 * e * e * Q * Q * L * L * (1.0 - lam * lam) * in.G2 / (in.r * in.r * lam * lam);
}

TEST(EtaMax, UnitConstants) {
  EXPECT_NEAR(eta_max(1, 1.0), 0.06455, 1e-5);
  EXPECT_DOUBLE_EQ(eta_max(2, 1.0), eta_max(1, 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(eta_max(1, 2.0), eta_max(1, 1.0) / 2.0);
  EXPECT_THROW(eta_max(0, 1.0), DomainError);
}

TEST(GTilde, HalfProbabilityGivesTwentySix) {
  EXPECT_DOUBLE_EQ(g_tilde_squared(0.5, 1, 1.0), 26.0);
  EXPECT_DOUBLE_EQ(g_tilde_squared(0.5, 5, 3.0), 26.0 * 25.0 * 3.0);
  EXPECT_DOUBLE_EQ(bound_terms(sample_inputs()).g_tilde2, 26.0 * 25.0 * 3.0);
}

TEST(BoundTerms, TotalIsSumAndMatchesTranscription) {
  const BoundInputs in = sample_inputs();
  const auto b = bound_terms(in);
  EXPECT_DOUBLE_EQ(b.total, b.init_term + b.detection_term + b.sgd_hetero_term + b.contraction_term);
  EXPECT_NEAR(b.total, reference_total(in), 1e-12 * b.total);
  for (double term : {b.init_term, b.detection_term, b.sgd_hetero_term, b.contraction_term}) EXPECT_GE(term, 0.0);
  EXPECT_TRUE(b.valid);
}

TEST(BoundTerms, DoublingRoundsHalvesOnlyTheInitialTerm) {
  BoundInputs in = sample_inputs();
  const auto a = bound_terms(in);
  in.T *= 2;
  const auto b = bound_terms(in);
  EXPECT_DOUBLE_EQ(b.init_term, a.init_term / 2.0);
  EXPECT_EQ(b.detection_term, a.detection_term);
  EXPECT_EQ(b.sgd_hetero_term, a.sgd_hetero_term);
  EXPECT_EQ(b.contraction_term, a.contraction_term);
}

TEST(BoundTerms, HeterogeneityIncreasesSgdTerm) {
  BoundInputs in = sample_inputs();
  double prev = 0.0;
  for (double s : {0.01, 0.1, 1.0, 10.0}) {
    in.sigma_g2 = s;
    const double cur = bound_terms(in).sgd_hetero_term;
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(BoundTerms, DetectionTermFallsWithSnr) {
  BoundInputs in = sample_inputs();
  double prev = INFINITY;
  for (double snr : {0.01, 0.1, 0.394, 1.0, 10.0, 1000.0}) {
    in.snr_min = snr;
    const double cur = bound_terms(in).detection_term;
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(BoundTerms, ContractionIsSmallestAtHalf) {
  BoundInputs in = sample_inputs();
  in.p = 0.5;
  const double best = bound_terms(in).contraction_term;
  EXPECT_GT(best, 0.0);
  for (int k = 1; k < 100; ++k) {
    in.p = k / 100.0;
    if (k == 50) continue;
    EXPECT_GT(bound_terms(in).contraction_term, best) << "p = " << in.p;
  }
}

TEST(BoundTerms, InverseSqrtRoundScaling) {
  BoundInputs in = sample_inputs();
  const double c = 0.5 * eta_max(in.Q, in.L) * std::sqrt(100.0);
  auto linear_part = [&](int T) {
    in.T = T;
    in.eta = c / std::sqrt(static_cast<double>(T));
    const auto b = bound_terms(in);
    return b.init_term + b.detection_term + 4.0 * in.eta * in.L * in.Q * in.G2;
  };
  for (int T : {100, 400, 2500}) EXPECT_NEAR(linear_part(4 * T) / linear_part(T), 0.5, 1e-12);
}

TEST(BoundTerms, StepAboveLimitIsFlaggedInvalid) {
  BoundInputs in = sample_inputs();
  in.eta = 1.01 * eta_max(in.Q, in.L);
  const auto b = bound_terms(in);
  EXPECT_FALSE(b.valid);
  EXPECT_GT(b.total, 0.0);
}

TEST(BoundTerms, RejectsOutOfDomainInputs) {
  BoundInputs in = sample_inputs();
  in.p = 1.0;
  EXPECT_THROW(bound_terms(in), DomainError);
  in = sample_inputs();
  in.snr_min = 0.0;
  EXPECT_THROW(bound_terms(in), DomainError);
  in = sample_inputs();
  in.r = 1.5;
  EXPECT_THROW(bound_terms(in), DomainError);
}

}  // namespace
}  // namespace ncairfl
