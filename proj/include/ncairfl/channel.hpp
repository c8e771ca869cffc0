#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "ncairfl/dither_codec.hpp"
#include "ncairfl/errors.hpp"
#include "ncairfl/rng.hpp"

namespace ncairfl {

inline constexpr double kSpeedOfLight = 2.998e8;  // m/s
inline constexpr double kDefaultRhoCap = 1e12;

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// Large-scale power gain of one device's link.
struct LinkGain {
  double kappa = 1.0;
  double distance_m = 0.0;
};

// kappa = c^2 / (4 pi f_c d)^2
inline LinkGain path_loss(double distance_m, double f_c_hz) {
  if (!(distance_m > 0.0)) throw DomainError("link distance must be > 0");
  if (!(f_c_hz > 0.0)) throw DomainError("carrier frequency must be > 0");
  const double denom = 4.0 * std::numbers::pi * f_c_hz * distance_m;
  return {kSpeedOfLight * kSpeedOfLight / (denom * denom), distance_m};
}

// Device distances drawn from U(0, max], the open end excluding zero.
inline std::vector<LinkGain> draw_link_gains(int n, double f_c_hz, RngStream& rng,
                                             double max_distance_m = 100.0) {
  std::vector<LinkGain> gains;
  gains.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    gains.push_back(path_loss(max_distance_m * (1.0 - rng.uniform()), f_c_hz));
  }
  return gains;
}

// min_i P_i kappa_i / sigma^2 over all devices.
inline double snr_min(std::span<const double> powers, std::span<const LinkGain> gains, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("noise variance must be > 0 for an SNR");
  check_same_length(powers.size(), gains.size(), "snr_min: powers vs gains");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < powers.size(); ++i) {
    best = std::min(best, powers[i] * gains[i].kappa / sigma2);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Non-coherent transmission

// x_j = sqrt(rho g_j / (kappa eta)). Zero payload entries map to zero.
inline Eigen::VectorXd transmit_signal(const EncodedVector& g, double eta, double rho,
                                       const LinkGain& gain) {
  if (!(rho > 0.0)) throw DomainError("rho must be > 0");
  Eigen::VectorXd x(g.size());
  const double denom = gain.kappa * eta;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double gj = g.g(j);
    if (gj < 0.0) throw ContractViolation("negative payload entry in transmit_signal");
    x(j) = gj == 0.0 ? 0.0 : std::sqrt(rho * gj / denom);
  }
  return x;
}

// (1/d) ||x||^2
template <class Derived>
double average_power(const Eigen::MatrixBase<Derived>& x) {
  return x.size() == 0 ? 0.0 : x.squaredNorm() / static_cast<double>(x.size());
}

namespace detail {

// Walks rho down until `violates(rho)` is false. The closed-form rho is exact
// in real arithmetic, so at most a few ulps are ever removed.
template <class Violates>
double shrink_until_feasible(double rho, Violates&& violates) {
  for (int step = 0; violates(rho); ++step) {
    rho = step < 16 ? std::nextafter(rho, 0.0) : rho * (1.0 - 1e-12);
  }
  return rho;
}

}  // namespace detail

// Largest common scale keeping every active device within its average power
// budget: rho = min_i P_i kappa_i eta d / sum_j g_ij. Devices with an all-zero
// payload impose no constraint; if none constrains, rho_cap is returned.
inline double select_rho(std::span<const EncodedVector> encoded, std::span<const LinkGain> gains,
                         std::span<const double> powers, double eta, Eigen::Index d,
                         double rho_cap = kDefaultRhoCap) {
  check_same_length(encoded.size(), gains.size(), "select_rho: payloads vs gains");
  check_same_length(encoded.size(), powers.size(), "select_rho: payloads vs powers");
  double rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const double mass = encoded[i].g.sum();
    if (mass > 0.0) {
      rho = std::min(rho, powers[i] * gains[i].kappa * eta * static_cast<double>(d) / mass);
    }
  }
  if (!std::isfinite(rho) || rho <= 0.0) return rho_cap;
  rho = std::min(rho, rho_cap);
  return detail::shrink_until_feasible(rho, [&](double candidate) {
    for (std::size_t i = 0; i < encoded.size(); ++i) {
      if (average_power(transmit_signal(encoded[i], eta, candidate, gains[i])) > powers[i]) {
        return true;
      }
    }
    return false;
  });
}

// ---------------------------------------------------------------------------
// Fading and superposition

enum class FadingModel {
  rayleigh,  // h ~ CN(0, 1)
  unit,      // h = 1 (degenerate channel, for oracles)
};

// One round's small-scale fading (rows follow the active-device order) plus
// noise level and power scale.
struct ChannelRound {
  Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> h;
  double sigma2 = 0.0;
  double rho = 1.0;
};

inline ChannelRound draw_channel_round(Eigen::Index devices, Eigen::Index d, double sigma2,
                                       double rho, FadingModel fading, RngStream& rng) {
  ChannelRound round;
  round.sigma2 = sigma2;
  round.rho = rho;
  round.h.resize(devices, d);
  if (fading == FadingModel::unit) {
    round.h.setConstant({1.0, 0.0});
  } else {
    for (Eigen::Index k = 0; k < round.h.size(); ++k) round.h.data()[k] = rng.complex_normal(1.0);
  }
  return round;
}

// y_j = sum_i h_ij sqrt(kappa_i) x_ij + n_j, n_j ~ CN(0, sigma^2). Summation
// runs over devices in the given order. Works for real (non-coherent) and
// complex (coherent, pre-equalized) amplitudes.
template <class Amplitude>
Eigen::VectorXcd superpose(std::span<const Amplitude> xs, std::span<const LinkGain> gains,
                           const ChannelRound& round, RngStream& rng, Eigen::Index d) {
  check_same_length(xs.size(), gains.size(), "superpose: signals vs gains");
  check_same_length(xs.size(), static_cast<std::size_t>(round.h.rows()), "superpose: signals vs fading rows");
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_same_length(static_cast<std::size_t>(xs[i].size()), static_cast<std::size_t>(d),
                      "superpose: signal length");
    const double amp = std::sqrt(gains[i].kappa);
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < d; ++j) y(j) += round.h(row, j) * (amp * xs[i](j));
  }
  if (round.sigma2 > 0.0) {
    for (Eigen::Index j = 0; j < d; ++j) y(j) += rng.complex_normal(round.sigma2);
  }
  return y;
}

// Square-law statistic r_j = (|y_j|^2 - sigma^2) / rho.
struct ReceivedStats {
  Eigen::VectorXd r;
};

inline ReceivedStats square_law(const Eigen::VectorXcd& y, double sigma2, double rho) {
  if (!(rho > 0.0)) throw DomainError("rho must be > 0");
  ReceivedStats out;
  out.r.resize(y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    // std::norm may go through abs(); keep the plain sum of squares.
    const double power = y(j).real() * y(j).real() + y(j).imag() * y(j).imag();
    out.r(j) = (power - sigma2) / rho;
  }
  return out;
}

// Uplink as seen by a scheme that has no channel knowledge: amplitudes go in,
// the received vector comes out, and the fading draw never leaves this call.
class NonCoherentUplink {
 public:
  NonCoherentUplink(FadingModel fading, double sigma2) : fading_(fading), sigma2_(sigma2) {}

  double sigma2() const { return sigma2_; }

  Eigen::VectorXcd transmit(std::span<const Eigen::VectorXd> xs, std::span<const LinkGain> gains,
                            double rho, Eigen::Index d, RngStream& rng) const {
    const ChannelRound round = draw_channel_round(static_cast<Eigen::Index>(xs.size()), d, sigma2_,
                                                  rho, fading_, rng);
    return superpose(xs, gains, round, rng, d);
  }

 private:
  FadingModel fading_;
  double sigma2_;
};

}  // namespace ncairfl
