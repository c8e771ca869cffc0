#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ncairfl/channel.hpp"
#include "ncairfl/data.hpp"
#include "ncairfl/harness/config.hpp"
#include "ncairfl/harness/metrics.hpp"
#include "ncairfl/model.hpp"
#include "ncairfl/problems.hpp"
#include "ncairfl/rng.hpp"
#include "ncairfl/schemes.hpp"

namespace ncairfl {

// Data loaded once per experiment and shared read-only by every trial.
struct DataBundle {
  Dataset train;
  Dataset test;
  RegressionSet regression;
  DatasetKind kind = DatasetKind::idx;
};

inline DataBundle load_data(const ExperimentConfig& cfg) {
  DataBundle data;
  data.kind = cfg.dataset.kind;
  RngStream synth_rng = derive_stream(cfg.master_seed, {"dataset"});
  switch (cfg.dataset.kind) {
    case DatasetKind::idx: {
      data.train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels, Split::train);
      data.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels, Split::test);
      break;
    }
    case DatasetKind::blobs: {
      const std::size_t total = cfg.dataset.train_size + cfg.dataset.test_size;
      Dataset all = synth_blobs(cfg.dataset.dims, total, synth_rng,
                                {cfg.dataset.separation, cfg.dataset.noise_std});
      const auto n_train = static_cast<Eigen::Index>(cfg.dataset.train_size);
      data.train.features = all.features.topRows(n_train);
      data.train.labels.assign(all.labels.begin(), all.labels.begin() + n_train);
      data.test.split = Split::test;
      data.test.features = all.features.bottomRows(all.features.rows() - n_train);
      data.test.labels.assign(all.labels.begin() + n_train, all.labels.end());
      break;
    }
    case DatasetKind::quadratic: {
      data.regression = synth_regression(cfg.dataset.dims, cfg.dataset.train_size, synth_rng,
                                         cfg.dataset.noise_std);
      break;
    }
  }
  if (cfg.subset_fraction < 1.0 && cfg.dataset.kind != DatasetKind::quadratic) {
    RngStream subset_rng = derive_stream(cfg.master_seed, {"subset"});
    data.train = subsample(data.train, cfg.subset_fraction, subset_rng);
  }
  return data;
}

inline MlpShape mlp_shape_for(const ExperimentConfig& cfg, const DataBundle& data) {
  return {static_cast<int>(data.train.dims()), cfg.dataset.hidden, kNumClasses};
}

using AnyProblem = std::variant<MlpProblem, QuadraticProblem>;

// Everything that is fixed for one trial and shared by all schemes in it.
struct TrialSetup {
  int trial = 0;
  std::uint64_t trial_seed = 0;
  std::vector<LinkGain> gains;
  double snr_min = 0.0;
  ParamVector theta0;
  std::shared_ptr<const AnyProblem> problem;
};

inline std::uint64_t trial_seed(std::uint64_t master_seed, int trial) {
  return stream_key(master_seed, {"trial", trial});
}

inline TrialSetup build_trial(const ExperimentConfig& cfg, const DataBundle& data, int trial) {
  TrialSetup setup;
  setup.trial = trial;
  setup.trial_seed = trial_seed(cfg.master_seed, trial);

  RngStream distance_rng = derive_stream(cfg.distance_seed, {"distances", trial});
  setup.gains = draw_link_gains(cfg.n, cfg.f_c_hz, distance_rng, cfg.max_distance_m);
  const auto powers = cfg.device_powers();
  setup.snr_min = snr_min(powers, setup.gains, cfg.sigma2_watts);

  RngStream part_rng = derive_stream(setup.trial_seed, {"partition"});
  RngStream init_rng = derive_stream(setup.trial_seed, {"init"});
  if (data.kind == DatasetKind::quadratic) {
    auto parts = partition_iid(data.regression.size(), cfg.n, part_rng);
    auto problem = std::make_shared<AnyProblem>(
        std::in_place_type<QuadraticProblem>, data.regression, std::move(parts), cfg.batch_size);
    setup.theta0 = std::get<QuadraticProblem>(*problem).initial_params(init_rng);
    setup.problem = std::move(problem);
  } else {
    auto parts = partition(data.train, cfg.n, cfg.partition_mode, part_rng);
    DevicePartition everything{0, std::vector<std::size_t>(data.train.size())};
    std::iota(everything.sample_indices.begin(), everything.sample_indices.end(), std::size_t{0});
    RngStream probe_rng = derive_stream(setup.trial_seed, {"probe"});
    Batch probe = sample_batch(data.train, everything, std::min(cfg.probe_size, data.train.size()), probe_rng);
    auto problem = std::make_shared<AnyProblem>(std::in_place_type<MlpProblem>, mlp_shape_for(cfg, data),
                                                data.train, data.test, std::move(parts), cfg.batch_size,
                                                std::move(probe));
    setup.theta0 = std::get<MlpProblem>(*problem).initial_params(init_rng);
    setup.problem = std::move(problem);
  }
  return setup;
}

inline SchemeParams scheme_params(const ExperimentConfig& cfg, const TrialSetup& setup) {
  SchemeParams p;
  p.n = cfg.n;
  p.r = cfg.r;
  p.local_steps = cfg.Q;
  p.eta = cfg.eta;
  p.p = cfg.p;
  p.powers = cfg.device_powers();
  p.gains = setup.gains;
  p.sigma2 = cfg.sigma2_watts;
  p.rho_cap = cfg.rho_cap;
  p.gamma_th = cfg.gamma_th;
  p.fading = cfg.fading;
  return p;
}

struct RunDiagnostics {
  long long rounds = 0;
  long long power_checks = 0;
  long long power_violations = 0;
  double max_power_ratio = 0.0;
  bool with_replacement = false;
  std::vector<std::string> diverged;  // "scheme/trial@round"

  void merge(const RunDiagnostics& o) {
    rounds += o.rounds;
    power_checks += o.power_checks;
    power_violations += o.power_violations;
    max_power_ratio = std::max(max_power_ratio, o.max_power_ratio);
    with_replacement |= o.with_replacement;
    diverged.insert(diverged.end(), o.diverged.begin(), o.diverged.end());
  }
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  RunDiagnostics diagnostics;
};

namespace detail {

struct JobOutput {
  std::vector<MetricsRecord> records;
  RunDiagnostics diagnostics;
};

template <FederatedProblem Problem>
JobOutput run_scheme_trial(SchemeKind kind, const Problem& problem, const TrialSetup& setup,
                           const ExperimentConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  const SchemeParams params = scheme_params(cfg, setup);
  const RoundStreams streams{setup.trial_seed};
  const auto start = Clock::now();
  JobOutput out;

  auto row = [&](int round, const ProbeStats& probe, double accuracy, double rho) {
    MetricsRecord rec;
    rec.scheme = std::string(scheme_name(kind));
    rec.trial = setup.trial;
    rec.round = round;
    rec.train_loss = probe.loss;
    rec.test_accuracy = accuracy;
    rec.grad_norm_sq = probe.grad_norm_sq;
    rec.rho = rho;
    rec.snr_min = setup.snr_min;
    rec.wall_ms = cfg.record_wall_ms
                      ? std::chrono::duration<double, std::milli>(Clock::now() - start).count()
                      : 0.0;
    out.records.push_back(std::move(rec));
  };
  auto evaluate_row = [&](const RoundState& s, double rho) {
    row(s.round, problem.probe(s.theta), problem.evaluate(s.theta).accuracy, rho);
  };

  RoundState state = RoundState::initial(setup.theta0, cfg.n);
  evaluate_row(state, 0.0);
  for (int t = 0; t < cfg.T; ++t) {
    RoundResult result;
    bool diverged = false;
    try {
      result = run_round(kind, problem, std::move(state), params, streams);
    } catch (const DivergenceError&) {
      diverged = true;
    } catch (const NumericOverflowError&) {
      diverged = true;
    }
    if (diverged) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row(t + 1, {nan, nan}, 0.0, nan);
      out.diagnostics.diverged.push_back(std::string(scheme_name(kind)) + "/" +
                                         std::to_string(setup.trial) + "@" + std::to_string(t + 1));
      break;
    }
    state = std::move(result.state);
    auto& diag = out.diagnostics;
    ++diag.rounds;
    diag.power_checks += result.report.power_checks;
    diag.power_violations += result.report.power_violations;
    diag.max_power_ratio = std::max(diag.max_power_ratio, result.report.max_power_ratio);
    diag.with_replacement |= result.report.with_replacement;
    if (state.round % cfg.eval_every == 0 || state.round == cfg.T) evaluate_row(state, result.report.rho);
  }
  return out;
}

}  // namespace detail

// Runs every (scheme, trial) pair, possibly on several threads, and returns
// the rows in canonical (scheme, trial, round) order.
inline ExperimentResult run_experiment_detailed(const ExperimentConfig& cfg, const DataBundle& data) {
  std::vector<TrialSetup> trials;
  for (int t = 0; t < cfg.trials; ++t) trials.push_back(build_trial(cfg, data, t));

  const std::size_t n_jobs = cfg.schemes.size() * trials.size();
  std::vector<detail::JobOutput> outputs(n_jobs);
  std::vector<std::exception_ptr> errors(n_jobs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t job = next++; job < n_jobs; job = next++) {
      const SchemeKind kind = cfg.schemes[job / trials.size()];
      const TrialSetup& setup = trials[job % trials.size()];
      try {
        outputs[job] = std::visit(
            [&](const auto& problem) { return detail::run_scheme_trial(kind, problem, setup, cfg); },
            *setup.problem);
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };

  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                      : static_cast<unsigned>(cfg.threads);
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_jobs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  for (auto& out : outputs) {
    result.records.insert(result.records.end(), std::make_move_iterator(out.records.begin()),
                          std::make_move_iterator(out.records.end()));
    result.diagnostics.merge(out.diagnostics);
  }
  return result;
}

inline ExperimentResult run_experiment_detailed(const ExperimentConfig& cfg) {
  return run_experiment_detailed(cfg, load_data(cfg));
}

inline std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg) {
  return run_experiment_detailed(cfg).records;
}

}  // namespace ncairfl
