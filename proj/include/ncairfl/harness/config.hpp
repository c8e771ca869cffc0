#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ncairfl/channel.hpp"
#include "ncairfl/data.hpp"
#include "ncairfl/errors.hpp"
#include "ncairfl/schemes.hpp"

namespace ncairfl {

enum class DatasetKind { idx, blobs, quadratic };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::idx;
  // idx
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  // synthetic
  int dims = 20;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  double separation = 10.0;
  double noise_std = 0.1;
  // MLP hidden width (784/100/10 for MNIST-shaped inputs)
  int hidden = 100;
};

// User-supplied constants of the convergence bound. L and f_gap may be left
// out for the quadratic task, where they are computed exactly.
struct BoundSection {
  std::optional<double> L, f_gap, snr_min;
  double G2 = 1.0;
  double sigma_l2 = 1.0;
  double sigma_g2 = 1.0;
};

struct ExperimentConfig {
  std::vector<SchemeKind> schemes;
  int n = 20;
  int T = 300;
  int Q = 5;
  double r = 0.2;
  double p = 0.5;
  double eta = 0.05;
  std::size_t batch_size = 64;
  std::vector<double> P_watts{2e-8};  // one entry shared by all, or one per device
  double sigma2_dbm = -123.0;
  double sigma2_watts = dbm_to_watts(-123.0);
  double f_c_hz = 2.4e9;
  double max_distance_m = 100.0;
  std::uint64_t distance_seed = 1;
  int trials = 1;
  DatasetSpec dataset;
  PartitionMode partition_mode = PartitionMode::iid;
  int eval_every = 10;
  std::uint64_t master_seed = 1;
  std::filesystem::path output_path = "metrics.csv";
  double rho_cap = kDefaultRhoCap;
  double gamma_th = default_gamma_th();
  double subset_fraction = 1.0;
  FadingModel fading = FadingModel::rayleigh;
  std::size_t probe_size = 1024;
  int threads = 1;
  bool record_wall_ms = false;
  BoundSection bound;

  std::vector<double> device_powers() const {
    if (P_watts.size() == 1) return std::vector<double>(static_cast<std::size_t>(n), P_watts.front());
    return P_watts;
  }
};

namespace detail {

using nlohmann::json;

template <class T>
T get_field(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string("bad value: ") + e.what());
  }
}

template <class T>
void read_opt(const json& j, const std::string& key, T& out) {
  if (j.contains(key)) out = get_field<T>(j, key);
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError(where + it.key(), "unknown field");
  }
}

inline DatasetSpec parse_dataset(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError("dataset", "must be an object");
  DatasetSpec ds;
  const auto kind = get_field<std::string>(j, "kind");
  auto resolve = [&](const std::string& key) {
    std::filesystem::path p = get_field<std::string>(j, key);
    return p.is_absolute() ? p : base / p;
  };
  if (kind == "idx") {
    reject_unknown(j, {"kind", "train_images", "train_labels", "test_images", "test_labels", "hidden"},
                   "dataset.");
    ds.kind = DatasetKind::idx;
    ds.train_images = resolve("train_images");
    ds.train_labels = resolve("train_labels");
    ds.test_images = resolve("test_images");
    ds.test_labels = resolve("test_labels");
  } else if (kind == "blobs" || kind == "quadratic") {
    reject_unknown(j, {"kind", "dims", "train_size", "test_size", "separation", "noise_std", "hidden"},
                   "dataset.");
    ds.kind = kind == "blobs" ? DatasetKind::blobs : DatasetKind::quadratic;
    ds.noise_std = ds.kind == DatasetKind::blobs ? 0.02 : 0.1;
    read_opt(j, "dims", ds.dims);
    read_opt(j, "train_size", ds.train_size);
    read_opt(j, "test_size", ds.test_size);
    read_opt(j, "separation", ds.separation);
    read_opt(j, "noise_std", ds.noise_std);
    if (ds.dims < 1) throw ConfigError("dataset.dims", "must be >= 1");
    if (ds.train_size < 2) throw ConfigError("dataset.train_size", "must be >= 2");
    if (ds.kind == DatasetKind::blobs && ds.test_size < 2) {
      throw ConfigError("dataset.test_size", "must be >= 2");
    }
  } else {
    throw ConfigError("dataset.kind", "expected idx, blobs or quadratic, got '" + kind + "'");
  }
  read_opt(j, "hidden", ds.hidden);
  if (ds.hidden < 1) throw ConfigError("dataset.hidden", "must be >= 1");
  return ds;
}

}  // namespace detail

// Parses and validates a JSON configuration. Relative dataset paths are taken
// relative to `base_dir`.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::filesystem::path& base_dir = ".") {
  using detail::get_field;
  using detail::read_opt;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<file>", "top level must be an object");
  detail::reject_unknown(
      j,
      {"schemes", "n", "T", "Q", "r", "p", "eta", "batch_size", "P_watts", "sigma2_dbm", "f_c_hz",
       "max_distance_m", "distance_seed", "trials", "dataset", "partition_mode", "eval_every",
       "master_seed", "output_path", "rho_cap", "gamma_th", "subset_fraction", "fading",
       "probe_size", "threads", "record_wall_ms", "bound"},
      "");

  ExperimentConfig c;
  if (!j.contains("schemes")) throw ConfigError("schemes", "missing scheme list");
  const auto names = get_field<std::vector<std::string>>(j, "schemes");
  if (names.empty()) throw ConfigError("schemes", "scheme list is empty");
  for (const auto& name : names) c.schemes.push_back(parse_scheme(name));

  read_opt(j, "n", c.n);
  read_opt(j, "T", c.T);
  read_opt(j, "Q", c.Q);
  read_opt(j, "r", c.r);
  read_opt(j, "p", c.p);
  read_opt(j, "eta", c.eta);
  read_opt(j, "batch_size", c.batch_size);
  if (j.contains("P_watts")) {
    if (j.at("P_watts").is_array()) {
      c.P_watts = get_field<std::vector<double>>(j, "P_watts");
    } else {
      c.P_watts = {get_field<double>(j, "P_watts")};
    }
  }
  read_opt(j, "sigma2_dbm", c.sigma2_dbm);
  read_opt(j, "f_c_hz", c.f_c_hz);
  read_opt(j, "max_distance_m", c.max_distance_m);
  read_opt(j, "distance_seed", c.distance_seed);
  read_opt(j, "trials", c.trials);
  read_opt(j, "eval_every", c.eval_every);
  read_opt(j, "master_seed", c.master_seed);
  if (j.contains("output_path")) c.output_path = get_field<std::string>(j, "output_path");
  read_opt(j, "rho_cap", c.rho_cap);
  read_opt(j, "gamma_th", c.gamma_th);
  read_opt(j, "subset_fraction", c.subset_fraction);
  read_opt(j, "probe_size", c.probe_size);
  read_opt(j, "threads", c.threads);
  read_opt(j, "record_wall_ms", c.record_wall_ms);

  if (j.contains("partition_mode")) {
    const auto mode = get_field<std::string>(j, "partition_mode");
    if (mode == "iid") {
      c.partition_mode = PartitionMode::iid;
    } else if (mode == "noniid") {
      c.partition_mode = PartitionMode::noniid;
    } else {
      throw ConfigError("partition_mode", "expected iid or noniid, got '" + mode + "'");
    }
  }
  if (j.contains("fading")) {
    const auto fading = get_field<std::string>(j, "fading");
    if (fading == "rayleigh") {
      c.fading = FadingModel::rayleigh;
    } else if (fading == "unit") {
      c.fading = FadingModel::unit;
    } else {
      throw ConfigError("fading", "expected rayleigh or unit, got '" + fading + "'");
    }
  }
  if (!j.contains("dataset")) throw ConfigError("dataset", "missing dataset section");
  c.dataset = detail::parse_dataset(j.at("dataset"), base_dir);

  if (j.contains("bound")) {
    const auto& b = j.at("bound");
    if (!b.is_object()) throw ConfigError("bound", "must be an object");
    detail::reject_unknown(b, {"L", "G2", "sigma_l2", "sigma_g2", "f_gap", "snr_min"}, "bound.");
    if (b.contains("L")) c.bound.L = get_field<double>(b, "L");
    if (b.contains("f_gap")) c.bound.f_gap = get_field<double>(b, "f_gap");
    if (b.contains("snr_min")) c.bound.snr_min = get_field<double>(b, "snr_min");
    read_opt(b, "G2", c.bound.G2);
    read_opt(b, "sigma_l2", c.bound.sigma_l2);
    read_opt(b, "sigma_g2", c.bound.sigma_g2);
  }

  // Validation.
  checked_active_count(c.n, c.r);
  if (c.T < 1) throw ConfigError("T", "must be >= 1");
  if (c.Q < 1) throw ConfigError("Q", "must be >= 1");
  if (c.trials < 1) throw ConfigError("trials", "must be >= 1");
  if (!(c.eta > 0.0)) throw ConfigError("eta", "must be > 0");
  if (!(c.p > 0.0 && c.p < 1.0)) throw ConfigError("p", "must lie in (0, 1)");
  if (c.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (c.P_watts.empty() || (c.P_watts.size() != 1 && c.P_watts.size() != static_cast<std::size_t>(c.n))) {
    throw ConfigError("P_watts", "give one shared value or exactly n values");
  }
  for (double pw : c.P_watts) {
    if (!(pw > 0.0)) throw ConfigError("P_watts", "powers must be > 0");
  }
  if (!std::isfinite(c.sigma2_dbm)) throw ConfigError("sigma2_dbm", "must be finite");
  c.sigma2_watts = dbm_to_watts(c.sigma2_dbm);
  if (!(c.f_c_hz > 0.0)) throw ConfigError("f_c_hz", "must be > 0");
  if (!(c.max_distance_m > 0.0)) throw ConfigError("max_distance_m", "must be > 0");
  if (c.eval_every < 1) throw ConfigError("eval_every", "must be >= 1");
  if (!(c.rho_cap > 0.0)) throw ConfigError("rho_cap", "must be > 0");
  if (!(c.gamma_th >= 0.0)) throw ConfigError("gamma_th", "must be >= 0");
  if (!(c.subset_fraction > 0.0 && c.subset_fraction <= 1.0)) {
    throw ConfigError("subset_fraction", "must lie in (0, 1]");
  }
  if (c.probe_size < 1) throw ConfigError("probe_size", "must be >= 1");
  if (c.threads < 0) throw ConfigError("threads", "must be >= 0 (0 = all hardware threads)");
  return c;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace ncairfl
