#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "ncairfl/errors.hpp"
#include "ncairfl/rng.hpp"

namespace ncairfl {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kNumClasses = 10;

enum class Split { train, test };

// Labeled image-style data set: one row of features per sample, all in [0, 1].
struct Dataset {
  FeatureMatrix features;
  std::vector<int> labels;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  Eigen::Index dims() const { return features.cols(); }
};

struct DevicePartition {
  int device_id = 0;
  std::vector<std::size_t> sample_indices;
};

struct Batch {
  FeatureMatrix features;
  std::vector<int> labels;
  // Set when the batch was larger than the partition and had to be drawn
  // with replacement.
  bool with_replacement = false;

  std::size_t size() const { return labels.size(); }
};

enum class PartitionMode { iid, noniid };

// ---------------------------------------------------------------------------
// IDX ingestion

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::string& name) {
  if (bytes.size() < offset + 4) {
    throw LengthError(name + ": truncated header");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Parses an IDX image file (magic 0x803, N x rows x cols unsigned bytes) and
// its IDX label file (magic 0x801, N unsigned bytes). Pixels are scaled by
// 1/255 and each image is flattened row-major.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, Split split = Split::train) {
  const auto images = detail::read_file_bytes(images_path);
  const auto labels = detail::read_file_bytes(labels_path);
  const std::string iname = images_path.string();
  const std::string lname = labels_path.string();

  if (detail::read_be32(images, 0, iname) != kIdxImagesMagic) {
    throw FormatError(iname + ": bad magic, expected 0x00000803");
  }
  if (detail::read_be32(labels, 0, lname) != kIdxLabelsMagic) {
    throw FormatError(lname + ": bad magic, expected 0x00000801");
  }
  const std::size_t n = detail::read_be32(images, 4, iname);
  const std::size_t rows = detail::read_be32(images, 8, iname);
  const std::size_t cols = detail::read_be32(images, 12, iname);
  const std::size_t n_labels = detail::read_be32(labels, 4, lname);
  if (n != n_labels) {
    throw ConsistencyError("image count " + std::to_string(n) + " != label count " +
                           std::to_string(n_labels));
  }
  if (n == 0) throw FormatError(iname + ": empty data set");
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + n * pixels) {
    throw LengthError(iname + ": expected " + std::to_string(16 + n * pixels) + " bytes, got " +
                      std::to_string(images.size()));
  }
  if (labels.size() < 8 + n) {
    throw LengthError(lname + ": expected " + std::to_string(8 + n) + " bytes, got " +
                      std::to_string(labels.size()));
  }

  Dataset ds;
  ds.split = split;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  ds.labels.resize(n);
  const unsigned char* px = images.data() + 16;
  double* out = ds.features.data();
  for (std::size_t k = 0; k < n * pixels; ++k) out[k] = static_cast<double>(px[k]) / 255.0;
  for (std::size_t k = 0; k < n; ++k) {
    const int label = labels[8 + k];
    if (label >= kNumClasses) {
      throw FormatError(lname + ": label " + std::to_string(label) + " out of range");
    }
    ds.labels[k] = label;
  }
  return ds;
}

// Uniform random subset keeping max(1, round(fraction * N)) samples, in
// ascending original order.
inline Dataset subsample(const Dataset& ds, double fraction, RngStream& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DomainError("subset fraction must be in (0, 1]");
  }
  if (fraction == 1.0) return ds;
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size()))));
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());

  Dataset out;
  out.split = ds.split;
  out.features.resize(static_cast<Eigen::Index>(keep), ds.dims());
  out.labels.resize(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = ds.features.row(static_cast<Eigen::Index>(idx[k]));
    out.labels[k] = ds.labels[idx[k]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning

namespace detail {

// Splits `items` into `parts` contiguous chunks whose sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> split_even(const std::vector<std::size_t>& items,
                                                        std::size_t parts) {
  std::vector<std::vector<std::size_t>> out(parts);
  const std::size_t base = items.size() / parts;
  const std::size_t extra = items.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out[p].assign(items.begin() + static_cast<std::ptrdiff_t>(pos),
                  items.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

}  // namespace detail

// Shuffled split of sample ids 0..size-1 into n parts of equal size (+-1).
inline std::vector<DevicePartition> partition_iid(std::size_t size, int n, RngStream& rng) {
  if (n < 1 || static_cast<std::size_t>(n) > size) {
    throw InfeasiblePartitionError("cannot give " + std::to_string(n) + " devices at least one of " +
                                   std::to_string(size) + " samples");
  }
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  auto chunks = detail::split_even(idx, static_cast<std::size_t>(n));
  std::vector<DevicePartition> parts(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    parts[i].device_id = static_cast<int>(i);
    parts[i].sample_indices = std::move(chunks[i]);
  }
  return parts;
}

// iid: shuffled equal-size split. noniid: samples sorted by label are cut into
// 2n shards and every device is dealt two random shards.
inline std::vector<DevicePartition> partition(const Dataset& ds, int n, PartitionMode mode,
                                              RngStream& rng) {
  if (n < 1) throw InfeasiblePartitionError("device count must be >= 1");
  const auto devices = static_cast<std::size_t>(n);
  const std::size_t shards_needed = mode == PartitionMode::iid ? devices : 2 * devices;
  if (devices > ds.size() || shards_needed > ds.size()) {
    throw InfeasiblePartitionError("cannot give " + std::to_string(n) + " devices at least one of " +
                                   std::to_string(ds.size()) + " samples");
  }

  if (mode == PartitionMode::iid) return partition_iid(ds.size(), n, rng);

  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<DevicePartition> parts(devices);

  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });
  auto shards = detail::split_even(idx, 2 * devices);
  std::vector<std::size_t> order(2 * devices);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  for (std::size_t i = 0; i < devices; ++i) {
    parts[i].device_id = static_cast<int>(i);
    auto& s = parts[i].sample_indices;
    for (std::size_t k : {order[2 * i], order[2 * i + 1]}) {
      s.insert(s.end(), shards[k].begin(), shards[k].end());
    }
    std::sort(s.begin(), s.end());
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Mini-batches

inline Batch gather_batch(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Batch b;
  b.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dims());
  b.labels.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    b.features.row(static_cast<Eigen::Index>(k)) = ds.features.row(static_cast<Eigen::Index>(rows[k]));
    b.labels[k] = ds.labels[rows[k]];
  }
  return b;
}

// Uniform draw without replacement from the device's samples. A batch larger
// than the partition falls back to drawing with replacement and is flagged.
inline Batch sample_batch(const Dataset& ds, const DevicePartition& part, std::size_t batch_size,
                          RngStream& rng) {
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  const auto& pool = part.sample_indices;
  if (pool.empty()) throw DomainError("empty device partition");
  std::vector<std::size_t> rows;
  rows.reserve(batch_size);
  if (batch_size > pool.size()) {
    for (std::size_t k = 0; k < batch_size; ++k) rows.push_back(pool[rng.below(pool.size())]);
    Batch b = gather_batch(ds, rows);
    b.with_replacement = true;
    return b;
  }
  std::vector<std::size_t> scratch = pool;
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t j = k + rng.below(scratch.size() - k);
    std::swap(scratch[k], scratch[j]);
    rows.push_back(scratch[k]);
  }
  return gather_batch(ds, rows);
}

// ---------------------------------------------------------------------------
// Synthetic data

struct BlobOptions {
  // Distance scale between class means, in units of the per-feature noise.
  double separation = 10.0;
  double noise_std = 0.02;
};

// Ten Gaussian classes around 0.5 with means offset by separation * noise_std
// along random unit directions; values clamped to [0, 1].
inline Dataset synth_blobs(int dims, std::size_t size, RngStream& rng, BlobOptions opt = {}) {
  if (size < 2) throw DomainError("synthetic data set needs size >= 2");
  if (dims < 1) throw DomainError("synthetic data set needs dims >= 1");
  Eigen::MatrixXd means(kNumClasses, dims);
  for (int c = 0; c < kNumClasses; ++c) {
    Eigen::VectorXd u(dims);
    for (int k = 0; k < dims; ++k) u(k) = rng.normal();
    u /= u.norm();
    means.row(c) = (0.5 + opt.separation * opt.noise_std * u.array()).transpose();
  }
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(size), dims);
  ds.labels.resize(size);
  for (std::size_t s = 0; s < size; ++s) {
    const int c = static_cast<int>(s % kNumClasses);
    ds.labels[s] = c;
    for (int k = 0; k < dims; ++k) {
      const double v = means(c, k) + opt.noise_std * rng.normal();
      ds.features(static_cast<Eigen::Index>(s), k) = std::clamp(v, 0.0, 1.0);
    }
  }
  return ds;
}

// Least-squares regression data: rows a_k ~ N(0, I), targets
// b_k = a_k . theta_star + noise. Loss per sample is (a_k . theta - b_k)^2 / 2.
struct RegressionSet {
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;
  Eigen::VectorXd theta_star;

  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
  Eigen::Index dims() const { return features.cols(); }
};

inline RegressionSet synth_regression(int dims, std::size_t size, RngStream& rng,
                                      double noise_std = 0.1) {
  if (size < 2) throw DomainError("synthetic data set needs size >= 2");
  if (dims < 1) throw DomainError("synthetic data set needs dims >= 1");
  RegressionSet rs;
  rs.theta_star.resize(dims);
  for (int k = 0; k < dims; ++k) rs.theta_star(k) = rng.normal();
  rs.features.resize(static_cast<Eigen::Index>(size), dims);
  rs.targets.resize(static_cast<Eigen::Index>(size));
  for (Eigen::Index s = 0; s < rs.features.rows(); ++s) {
    for (int k = 0; k < dims; ++k) rs.features(s, k) = rng.normal();
    rs.targets(s) = rs.features.row(s).dot(rs.theta_star) + noise_std * rng.normal();
  }
  return rs;
}

}  // namespace ncairfl
