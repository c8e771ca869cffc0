#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "ncairfl/errors.hpp"

namespace ncairfl {

// Constants of the smooth non-convex convergence bound for NCAirFL.
struct BoundInputs {
  double L = 1.0;          // smoothness
  double G2 = 1.0;         // second moment bound of stochastic gradients
  double sigma_l2 = 1.0;   // local gradient variance
  double sigma_g2 = 1.0;   // heterogeneity across devices
  int Q = 1;               // local steps
  int T = 1;               // rounds
  int n = 1;               // devices
  double eta = 0.01;
  double r = 1.0;          // participation ratio
  double p = 0.5;          // dither probability
  double snr_min = 1.0;
  long long d = 1;
  double f_gap = 1.0;      // f(theta_0) - f*
};

struct BoundBreakdown {
  double init_term = 0.0;
  double detection_term = 0.0;
  double sgd_hetero_term = 0.0;
  double contraction_term = 0.0;
  double total = 0.0;
  // false when eta exceeds eta_max(Q, L); the numbers are still filled in.
  bool valid = true;

  double lambda = 0.5;
  double g_tilde2 = 0.0;
  double g_e2 = 0.0;
};

// 1 / (sqrt(240) Q L)
inline double eta_max(int Q, double L) {
  if (Q <= 0 || !(L > 0.0)) throw DomainError("eta_max needs Q > 0 and L > 0");
  return 1.0 / (std::sqrt(240.0) * Q * L);
}

// (8 / lambda^2 - 6) Q^2 G^2
inline double g_tilde_squared(double lambda, int Q, double G2) {
  return (8.0 / (lambda * lambda) - 6.0) * Q * Q * G2;
}

inline BoundBreakdown bound_terms(const BoundInputs& in) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw DomainError(std::string("bound input ") + name + " must be > 0");
  };
  positive(in.L, "L");
  positive(in.G2, "G2");
  positive(in.sigma_l2, "sigma_l2");
  positive(in.sigma_g2, "sigma_g2");
  positive(in.Q, "Q");
  positive(in.T, "T");
  positive(in.n, "n");
  positive(in.eta, "eta");
  positive(in.snr_min, "snr_min");
  positive(static_cast<double>(in.d), "d");
  positive(in.f_gap, "f_gap");
  if (!(in.r > 0.0 && in.r <= 1.0)) throw DomainError("bound input r must lie in (0, 1]");
  if (!(in.p > 0.0 && in.p < 1.0)) throw DomainError("bound input p must lie in (0, 1)");

  BoundBreakdown b;
  b.valid = in.eta <= eta_max(in.Q, in.L);
  b.lambda = std::min(in.p, 1.0 - in.p);
  const double lam2 = b.lambda * b.lambda;
  const double Q = in.Q;
  const double rn = in.r * in.n;
  b.g_tilde2 = g_tilde_squared(b.lambda, in.Q, in.G2);
  b.g_e2 = rn * rn * b.g_tilde2 + 4.0 * rn * b.g_tilde2 / in.snr_min +
           b.g_tilde2 / (static_cast<double>(in.d) * in.snr_min * in.snr_min);

  b.init_term = 8.0 * in.f_gap / (in.T * in.eta * Q);
  b.detection_term = 4.0 * in.eta * in.L * b.g_e2 / (Q * in.r * in.r * in.n * in.n);
  b.sgd_hetero_term = 4.0 * in.eta * in.L * Q * in.G2 +
                      40.0 * in.eta * in.eta * Q * in.L * in.L * (in.sigma_l2 + 6.0 * Q * in.sigma_g2);
  b.contraction_term = 48.0 * in.eta * in.eta * Q * Q * in.L * in.L * (1.0 - lam2) * in.G2 /
                       (in.r * in.r * lam2);
  b.total = b.init_term + b.detection_term + b.sgd_hetero_term + b.contraction_term;
  return b;
}

}  // namespace ncairfl
