// Command-line front end: run experiments, evaluate the convergence bound and
// inspect device partitions.

#include <CLI11.hpp>

#include <array>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "ncairfl/ncairfl.hpp"

namespace {

using namespace ncairfl;

int cmd_run(const std::string& config_path, const std::optional<std::string>& out_path,
            const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg = parse_config(config_path);
  if (out_path) cfg.output_path = *out_path;
  if (seed) cfg.master_seed = *seed;

  const ExperimentResult result = run_experiment_detailed(cfg);
  write_metrics(result.records, cfg.output_path);

  // Mean final accuracy and probe loss per scheme over trials.
  struct Final {
    double accuracy = 0.0, loss = 0.0;
    int count = 0;
  };
  std::map<std::string, Final> finals;
  for (const auto& rec : result.records) {
    if (rec.round == cfg.T) {
      auto& f = finals[rec.scheme];
      f.accuracy += rec.test_accuracy;
      f.loss += rec.train_loss;
      f.count += 1;
    }
  }
  std::cout << "wrote " << result.records.size() << " rows to " << cfg.output_path.string() << '\n';
  for (auto kind : cfg.schemes) {
    const std::string name(scheme_name(kind));
    const auto it = finals.find(name);
    if (it == finals.end()) {
      std::cout << name << ": diverged in every trial\n";
    } else if (cfg.dataset.kind == DatasetKind::quadratic) {
      std::cout << "final_loss[" << name << "] = " << it->second.loss / it->second.count << '\n';
    } else {
      std::cout << "final_accuracy[" << name << "] = " << it->second.accuracy / it->second.count << '\n';
    }
  }
  const auto& diag = result.diagnostics;
  std::cout << "power_checks = " << diag.power_checks << '\n'
            << "power_violations = " << diag.power_violations << '\n'
            << "max_power_ratio = " << std::setprecision(17) << diag.max_power_ratio << '\n';
  if (diag.with_replacement) {
    std::cout << "warning: batch_size exceeded a device partition; batches were drawn with replacement\n";
  }
  for (const auto& d : diag.diverged) std::cout << "diverged: " << d << '\n';
  return 0;
}

int cmd_bound(const std::string& config_path) {
  const ExperimentConfig cfg = parse_config(config_path);
  const DataBundle data = load_data(cfg);
  const TrialSetup setup = build_trial(cfg, data, 0);

  BoundInputs in;
  in.Q = cfg.Q;
  in.T = cfg.T;
  in.n = cfg.n;
  in.eta = cfg.eta;
  in.r = cfg.r;
  in.p = cfg.p;
  in.G2 = cfg.bound.G2;
  in.sigma_l2 = cfg.bound.sigma_l2;
  in.sigma_g2 = cfg.bound.sigma_g2;
  in.snr_min = cfg.bound.snr_min.value_or(setup.snr_min);

  if (const auto* quad = std::get_if<QuadraticProblem>(setup.problem.get())) {
    in.d = quad->dim();
    in.L = cfg.bound.L.value_or(quad->smoothness());
    in.f_gap = cfg.bound.f_gap.value_or(quad->loss(setup.theta0) - quad->loss(quad->minimizer()));
  } else {
    in.d = std::get<MlpProblem>(*setup.problem).dim();
    if (!cfg.bound.L) throw ConfigError("bound.L", "required unless the dataset is quadratic");
    if (!cfg.bound.f_gap) throw ConfigError("bound.f_gap", "required unless the dataset is quadratic");
    in.L = *cfg.bound.L;
    in.f_gap = *cfg.bound.f_gap;
  }

  const BoundBreakdown b = bound_terms(in);
  const std::array<std::pair<const char*, double>, 14> rows{{
      {"L", in.L},
      {"f_gap", in.f_gap},
      {"snr_min", in.snr_min},
      {"d", static_cast<double>(in.d)},
      {"eta", in.eta},
      {"eta_max", eta_max(in.Q, in.L)},
      {"lambda", b.lambda},
      {"G_tilde2", b.g_tilde2},
      {"G_e2", b.g_e2},
      {"init_term", b.init_term},
      {"detection_term", b.detection_term},
      {"sgd_hetero_term", b.sgd_hetero_term},
      {"contraction_term", b.contraction_term},
      {"total", b.total},
  }};
  std::cout << std::setprecision(17);
  for (const auto& [key, value] : rows) std::cout << key << " = " << value << '\n';
  std::cout << "valid = " << (b.valid ? "true" : "false") << "\n\n";
  std::cout << "term,value\n";
  for (const auto& [key, value] : rows) std::cout << key << ',' << value << '\n';
  std::cout << "valid," << (b.valid ? 1 : 0) << '\n';
  return 0;
}

int cmd_partition_report(const std::string& config_path) {
  const ExperimentConfig cfg = parse_config(config_path);
  const DataBundle data = load_data(cfg);
  const TrialSetup setup = build_trial(cfg, data, 0);
  if (const auto* mlp = std::get_if<MlpProblem>(setup.problem.get())) {
    std::cout << "device,samples,distinct_labels";
    for (int c = 0; c < kNumClasses; ++c) std::cout << ",label_" << c;
    std::cout << '\n';
    for (const auto& part : mlp->partitions()) {
      std::array<std::size_t, kNumClasses> hist{};
      for (auto idx : part.sample_indices) ++hist[static_cast<std::size_t>(data.train.labels[idx])];
      int distinct = 0;
      for (auto h : hist) distinct += h > 0 ? 1 : 0;
      std::cout << part.device_id << ',' << part.sample_indices.size() << ',' << distinct;
      for (auto h : hist) std::cout << ',' << h;
      std::cout << '\n';
    }
  } else {
    const auto& quad = std::get<QuadraticProblem>(*setup.problem);
    std::cout << "devices," << quad.num_devices() << "\nsamples," << data.regression.size() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-coherent over-the-air federated learning simulator"};
  app.require_subcommand(1);

  std::string run_config;
  std::optional<std::string> run_out;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Run the configured experiment and write the metrics CSV");
  run->add_option("--config", run_config, "Experiment configuration (JSON)")->required();
  run->add_option("--out", run_out, "Output CSV path (overrides output_path)");
  run->add_option("--seed", run_seed, "Master seed (overrides master_seed)");

  std::string bound_config;
  auto* bound = app.add_subcommand("bound", "Evaluate the convergence bound for a configuration");
  bound->add_option("--config", bound_config, "Experiment configuration (JSON)")->required();

  std::string report_config;
  auto* report = app.add_subcommand("partition-report", "Print per-device partition statistics");
  report->add_option("--config", report_config, "Experiment configuration (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_config, run_out, run_seed);
    if (*bound) return cmd_bound(bound_config);
    if (*report) return cmd_partition_report(report_config);
  } catch (const ncairfl::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
