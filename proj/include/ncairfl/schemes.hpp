#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string_view>
#include <vector>

#include "ncairfl/channel.hpp"
#include "ncairfl/dither_codec.hpp"
#include "ncairfl/errors.hpp"
#include "ncairfl/problems.hpp"
#include "ncairfl/rng.hpp"

namespace ncairfl {

enum class SchemeKind { FedAvgIdeal, NCAirFL, CAirFL, AirFLMem };

inline constexpr std::string_view scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::FedAvgIdeal: return "FedAvgIdeal";
    case SchemeKind::NCAirFL: return "NCAirFL";
    case SchemeKind::CAirFL: return "CAirFL";
    case SchemeKind::AirFLMem: return "AirFLMem";
  }
  return "unknown";
}

inline SchemeKind parse_scheme(std::string_view name) {
  for (auto kind : {SchemeKind::FedAvgIdeal, SchemeKind::NCAirFL, SchemeKind::CAirFL,
                    SchemeKind::AirFLMem}) {
    if (scheme_name(kind) == name) return kind;
  }
  throw ConfigError("schemes", "unknown scheme '" + std::string(name) + "'");
}

// Truncation threshold on |h| at which Rayleigh fading drops 10% of subcarriers.
inline double default_gamma_th() { return std::sqrt(-std::log(0.9)); }

// Everything a round needs besides the learning task and the state.
struct SchemeParams {
  int n = 20;
  double r = 0.2;
  int local_steps = 5;
  double eta = 0.05;
  double p = kDefaultDitherP;
  std::vector<double> powers;       // per device, Watts
  std::vector<LinkGain> gains;      // per device
  double sigma2 = 0.0;              // Watts
  double rho_cap = kDefaultRhoCap;
  double gamma_th = default_gamma_th();
  FadingModel fading = FadingModel::rayleigh;

  int active_count() const { return static_cast<int>(std::lround(r * n)); }
};

// Raises ConfigError unless r * n is a positive integer not above n.
inline int checked_active_count(int n, double r) {
  if (n < 1) throw ConfigError("n", "must be >= 1");
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("r", "participation ratio must lie in (0, 1]");
  const double k = r * n;
  const double rounded = std::round(k);
  if (std::abs(k - rounded) > 1e-9 || rounded < 1.0) {
    throw ConfigError("r", "r * n = " + std::to_string(k) + " is not a positive integer");
  }
  return static_cast<int>(rounded);
}

struct RoundState {
  ParamVector theta;
  std::vector<MemoryState> memories;
  int round = 0;

  static RoundState initial(ParamVector theta0, int n) {
    RoundState s;
    const Eigen::Index d = theta0.size();
    s.theta = std::move(theta0);
    s.memories.assign(static_cast<std::size_t>(n), MemoryState::zeros(d));
    return s;
  }
};

// Per-round diagnostics, not part of the learning state.
struct RoundReport {
  double rho = 0.0;
  std::vector<int> active;
  int power_checks = 0;
  int power_violations = 0;
  double max_power_ratio = 0.0;  // max_i (1/d)||x_i||^2 / P_i
  bool with_replacement = false;
};

struct RoundResult {
  RoundState state;
  RoundReport report;
};

// Streams for one trial. Selection, dither and local-SGD streams are shared by
// every scheme; the channel stream is per scheme.
struct RoundStreams {
  std::uint64_t trial_seed = 0;

  RngStream selection(int round) const { return derive_stream(trial_seed, {"select", round}); }
  RngStream local(int round, int device) const {
    return derive_stream(trial_seed, {"local", round, device});
  }
  RngStream channel(SchemeKind kind, int round) const {
    return derive_stream(trial_seed, {"channel", scheme_name(kind), round});
  }
};

// Uniform subset of size r*n without replacement, ascending device ids.
inline std::vector<int> sample_devices(int n, double r, RngStream& rng) {
  const int k = checked_active_count(n, r);
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

// theta - delta_hat / (r n)
inline ParamVector global_update(const ParamVector& theta, const ParamVector& delta_hat, double r,
                                 int n) {
  check_same_length(static_cast<std::size_t>(theta.size()), static_cast<std::size_t>(delta_hat.size()),
                    "global_update");
  const double rn = r * n;
  if (rn < 1.0 - 1e-9) throw DomainError("r * n must be >= 1");
  return theta - delta_hat / std::round(rn);
}

namespace detail {

inline void finish_round(RoundState& state, int round) {
  if (!state.theta.allFinite()) throw DivergenceError(round);
  state.round = round + 1;
}

template <FederatedProblem Problem>
std::vector<LocalUpdateResult> run_local_updates(const Problem& problem, const RoundState& state,
                                                 const SchemeParams& cfg, const RoundStreams& streams,
                                                 const std::vector<int>& active, RoundReport& report) {
  std::vector<LocalUpdateResult> updates;
  updates.reserve(active.size());
  for (int device : active) {
    RngStream rng = streams.local(state.round, device);
    updates.push_back(problem.local_update(state.theta, device, cfg.local_steps, cfg.eta, rng));
    report.with_replacement |= updates.back().with_replacement;
  }
  return updates;
}

template <class Signal>
void record_power(RoundReport& report, const Signal& x, double budget) {
  const double power = average_power(x);
  ++report.power_checks;
  if (power > budget) ++report.power_violations;
  report.max_power_ratio = std::max(report.max_power_ratio, power / budget);
}

}  // namespace detail

// theta - eta * (phi .* r) / (r n), the dither-removing decode folded into the
// global step. Same floating-point order as decode followed by global_update.
inline ParamVector ncairfl_global_step(const ParamVector& theta, const DitherVector& phi,
                                       const Eigen::VectorXd& r_stat, double eta, int active_count) {
  return theta - (eta * (phi.signs.array() * r_stat.array())).matrix() / static_cast<double>(active_count);
}

// One NCAirFL round. The server side sees only the uplink output; fading stays
// inside NonCoherentUplink.
template <FederatedProblem Problem>
RoundResult run_round_ncairfl(const Problem& problem, RoundState state, const SchemeParams& cfg,
                              const RoundStreams& streams) {
  const int t = state.round;
  const Eigen::Index d = problem.dim();
  RoundResult out;
  RoundReport& report = out.report;

  RngStream select_rng = streams.selection(t);
  report.active = sample_devices(cfg.n, cfg.r, select_rng);
  const DitherVector phi = gen_dither(streams.trial_seed, t, d, cfg.p);

  auto updates = detail::run_local_updates(problem, state, cfg, streams, report.active, report);

  std::vector<EncodedVector> payloads;
  std::vector<LinkGain> gains;
  std::vector<double> powers;
  for (std::size_t k = 0; k < report.active.size(); ++k) {
    auto& mem = state.memories[static_cast<std::size_t>(report.active[k])];
    payloads.push_back(encode(mem, updates[k].delta, phi));
    mem = update_memory(mem, updates[k].delta, phi, payloads.back(), true);
    gains.push_back(cfg.gains[static_cast<std::size_t>(report.active[k])]);
    powers.push_back(cfg.powers[static_cast<std::size_t>(report.active[k])]);
  }

  report.rho = select_rho(payloads, gains, powers, cfg.eta, d, cfg.rho_cap);
  std::vector<Eigen::VectorXd> signals;
  for (std::size_t k = 0; k < payloads.size(); ++k) {
    signals.push_back(transmit_signal(payloads[k], cfg.eta, report.rho, gains[k]));
    detail::record_power(report, signals.back(), powers[k]);
  }

  const NonCoherentUplink uplink(cfg.fading, cfg.sigma2);
  RngStream channel_rng = streams.channel(SchemeKind::NCAirFL, t);
  const Eigen::VectorXcd y = uplink.transmit(signals, gains, report.rho, d, channel_rng);
  const ReceivedStats stats = square_law(y, cfg.sigma2, report.rho);

  state.theta = ncairfl_global_step(state.theta, phi, stats.r, cfg.eta,
                                    static_cast<int>(report.active.size()));
  detail::finish_round(state, t);
  out.state = std::move(state);
  return out;
}

// Error-free FedAvg: theta - (1/(r n)) sum_i delta_i, summed in device order.
template <FederatedProblem Problem>
RoundResult run_round_ideal(const Problem& problem, RoundState state, const SchemeParams& cfg,
                            const RoundStreams& streams) {
  const int t = state.round;
  RoundResult out;
  RngStream select_rng = streams.selection(t);
  out.report.active = sample_devices(cfg.n, cfg.r, select_rng);
  auto updates = detail::run_local_updates(problem, state, cfg, streams, out.report.active, out.report);
  ParamVector sum = ParamVector::Zero(problem.dim());
  for (const auto& u : updates) sum += u.delta;
  state.theta = global_update(state.theta, sum, cfg.r, cfg.n);
  detail::finish_round(state, t);
  out.state = std::move(state);
  return out;
}

// Coherent baseline with truncated channel inversion and genie CSIT. Each
// active device sends payload v = delta/eta (or (m + delta)/eta with memory)
// pre-equalized by 1/h on subcarriers with |h| >= gamma_th and nothing
// elsewhere; the server reads Re(y)/sqrt(rho). With memory, truncated
// coordinates are carried to the next round and sent ones are cleared.
template <FederatedProblem Problem>
RoundResult run_round_trunc_ci(const Problem& problem, RoundState state, const SchemeParams& cfg,
                               const RoundStreams& streams, bool with_memory) {
  const int t = state.round;
  const Eigen::Index d = problem.dim();
  const SchemeKind kind = with_memory ? SchemeKind::AirFLMem : SchemeKind::CAirFL;
  RoundResult out;
  RoundReport& report = out.report;

  RngStream select_rng = streams.selection(t);
  report.active = sample_devices(cfg.n, cfg.r, select_rng);
  auto updates = detail::run_local_updates(problem, state, cfg, streams, report.active, report);
  const auto k_active = static_cast<Eigen::Index>(report.active.size());

  std::vector<Eigen::VectorXd> payloads;
  std::vector<LinkGain> gains;
  std::vector<double> powers;
  for (std::size_t k = 0; k < report.active.size(); ++k) {
    const auto dev = static_cast<std::size_t>(report.active[k]);
    const ParamVector carried =
        with_memory ? ParamVector(state.memories[dev].m + updates[k].delta) : updates[k].delta;
    payloads.push_back(carried / cfg.eta);
    gains.push_back(cfg.gains[dev]);
    powers.push_back(cfg.powers[dev]);
  }

  RngStream channel_rng = streams.channel(kind, t);
  ChannelRound channel = draw_channel_round(k_active, d, cfg.sigma2, 1.0, cfg.fading, channel_rng);
  auto sent = [&](Eigen::Index k, Eigen::Index j) { return std::abs(channel.h(k, j)) >= cfg.gamma_th; };

  // rho_i = P_i kappa_i d / sum_{j sent} v_ij^2 / |h_ij|^2
  std::vector<double> inverse_energy(report.active.size(), 0.0);
  double rho = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < k_active; ++k) {
    double e = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (sent(k, j)) e += payloads[static_cast<std::size_t>(k)](j) * payloads[static_cast<std::size_t>(k)](j) /
                           std::norm(channel.h(k, j));
    }
    inverse_energy[static_cast<std::size_t>(k)] = e;
    if (e > 0.0) {
      rho = std::min(rho, powers[static_cast<std::size_t>(k)] * gains[static_cast<std::size_t>(k)].kappa *
                              static_cast<double>(d) / e);
    }
  }
  if (!std::isfinite(rho) || rho <= 0.0) rho = cfg.rho_cap;
  rho = std::min(rho, cfg.rho_cap);

  auto build_signals = [&](double candidate) {
    std::vector<Eigen::VectorXcd> xs;
    const double root = std::sqrt(candidate);
    for (Eigen::Index k = 0; k < k_active; ++k) {
      Eigen::VectorXcd x = Eigen::VectorXcd::Zero(d);
      const double amp = std::sqrt(gains[static_cast<std::size_t>(k)].kappa);
      for (Eigen::Index j = 0; j < d; ++j) {
        if (sent(k, j)) x(j) = root * payloads[static_cast<std::size_t>(k)](j) / (amp * channel.h(k, j));
      }
      xs.push_back(std::move(x));
    }
    return xs;
  };
  rho = detail::shrink_until_feasible(rho, [&](double candidate) {
    auto xs = build_signals(candidate);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (average_power(xs[k]) > powers[k]) return true;
    }
    return false;
  });
  report.rho = rho;
  channel.rho = rho;
  const auto signals = build_signals(rho);
  for (std::size_t k = 0; k < signals.size(); ++k) detail::record_power(report, signals[k], powers[k]);

  const Eigen::VectorXcd y = superpose<Eigen::VectorXcd>(signals, gains, channel, channel_rng, d);
  const Eigen::VectorXd r_stat = y.real() / std::sqrt(rho);
  state.theta = global_update(state.theta, cfg.eta * r_stat, cfg.r, cfg.n);

  if (with_memory) {
    for (Eigen::Index k = 0; k < k_active; ++k) {
      auto& mem = state.memories[static_cast<std::size_t>(report.active[static_cast<std::size_t>(k)])];
      const ParamVector carried = mem.m + updates[static_cast<std::size_t>(k)].delta;
      for (Eigen::Index j = 0; j < d; ++j) mem.m(j) = sent(k, j) ? 0.0 : carried(j);
    }
  }
  detail::finish_round(state, t);
  out.state = std::move(state);
  return out;
}

template <FederatedProblem Problem>
RoundResult run_round(SchemeKind kind, const Problem& problem, RoundState state,
                      const SchemeParams& cfg, const RoundStreams& streams) {
  switch (kind) {
    case SchemeKind::FedAvgIdeal: return run_round_ideal(problem, std::move(state), cfg, streams);
    case SchemeKind::NCAirFL: return run_round_ncairfl(problem, std::move(state), cfg, streams);
    case SchemeKind::CAirFL: return run_round_trunc_ci(problem, std::move(state), cfg, streams, false);
    case SchemeKind::AirFLMem: return run_round_trunc_ci(problem, std::move(state), cfg, streams, true);
  }
  throw ContractViolation("unhandled scheme kind");
}

}  // namespace ncairfl
