#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>

#include "ncairfl/errors.hpp"
#include "ncairfl/model.hpp"
#include "ncairfl/rng.hpp"

namespace ncairfl {

// Shared per-round sign vector. Entries are exactly +1.0 or -1.0.
struct DitherVector {
  Eigen::VectorXd signs;
  int round = 0;

  Eigen::Index size() const { return signs.size(); }
};

// Per-device error-feedback accumulator, zero at start.
struct MemoryState {
  Eigen::VectorXd m;

  static MemoryState zeros(Eigen::Index d) { return {Eigen::VectorXd::Zero(d)}; }
  Eigen::Index size() const { return m.size(); }
};

// Non-negative transmit payload, in model-difference units.
struct EncodedVector {
  Eigen::VectorXd g;

  Eigen::Index size() const { return g.size(); }
};

inline constexpr double kDefaultDitherP = 0.5;

inline void check_dither_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p", "dither probability must lie in (0, 1)");
}

// Contraction factor of the dithered compressor.
inline double contraction_lambda(double p) {
  check_dither_probability(p);
  return std::min(p, 1.0 - p);
}

// The stream both ends of the link regenerate the round-t dither from.
inline RngStream dither_stream(std::uint64_t master_seed, int round) {
  return derive_stream(master_seed, {"dither", round});
}

// i.i.d. signs, +1 with probability p.
inline DitherVector gen_dither(std::uint64_t master_seed, int round, Eigen::Index d,
                               double p = kDefaultDitherP) {
  check_dither_probability(p);
  RngStream rng = dither_stream(master_seed, round);
  DitherVector phi;
  phi.round = round;
  phi.signs.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) phi.signs(j) = rng.uniform() < p ? 1.0 : -1.0;
  return phi;
}

// g_j = max(0, (m_j + delta_j) * phi_j)
inline EncodedVector encode(const MemoryState& mem, const ParamVector& delta,
                            const DitherVector& phi) {
  check_same_length(static_cast<std::size_t>(mem.size()), static_cast<std::size_t>(delta.size()),
                    "encode: memory vs delta");
  check_same_length(static_cast<std::size_t>(phi.size()), static_cast<std::size_t>(delta.size()),
                    "encode: dither vs delta");
  return {((mem.m + delta).array() * phi.signs.array()).max(0.0).matrix()};
}

// Active: m' = m + delta - phi .* g. Inactive devices keep their memory.
inline MemoryState update_memory(const MemoryState& mem, const ParamVector& delta,
                                 const DitherVector& phi, const EncodedVector& g, bool active) {
  if (!active) return mem;
  check_same_length(static_cast<std::size_t>(mem.size()), static_cast<std::size_t>(delta.size()),
                    "update_memory: memory vs delta");
  check_same_length(static_cast<std::size_t>(g.size()), static_cast<std::size_t>(delta.size()),
                    "update_memory: payload vs delta");
  return {(mem.m + delta).array() - phi.signs.array() * g.g.array()};
}

// delta_hat_j = eta * phi_j * r_j
inline ParamVector decode(const Eigen::VectorXd& r, const DitherVector& phi, double eta) {
  check_same_length(static_cast<std::size_t>(r.size()), static_cast<std::size_t>(phi.size()),
                    "decode: statistic vs dither");
  return eta * (phi.signs.array() * r.array()).matrix();
}

// E_phi || v - phi .* (v .* phi)^+ ||^2. The residual of coordinate j is v_j
// when the sign of v_j disagrees with phi_j and zero otherwise.
inline double contraction_expectation(const Eigen::VectorXd& v, double p) {
  check_dither_probability(p);
  double total = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double sq = v(j) * v(j);
    if (v(j) > 0.0) {
      total += (1.0 - p) * sq;
    } else if (v(j) < 0.0) {
      total += p * sq;
    }
  }
  return total;
}

}  // namespace ncairfl
