#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "ncairfl/errors.hpp"

namespace ncairfl {

inline constexpr const char* kMetricsHeader =
    "scheme,trial,round,train_loss,test_accuracy,grad_norm_sq,rho,snr_min,wall_ms";

// One evaluation row. train_loss and grad_norm_sq are measured on the fixed
// probe batch; a diverged run is marked by a NaN train_loss.
struct MetricsRecord {
  std::string scheme;
  int trial = 0;
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double grad_norm_sq = 0.0;
  double rho = 0.0;
  double snr_min = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + s + "' in metrics file");
  }
  return v;
}

}  // namespace detail

inline void write_metrics(std::ostream& out, const std::vector<MetricsRecord>& records) {
  using detail::format_double;
  out << kMetricsHeader << '\n';
  for (const auto& rec : records) {
    out << rec.scheme << ',' << rec.trial << ',' << rec.round << ',' << format_double(rec.train_loss) << ','
        << format_double(rec.test_accuracy) << ',' << format_double(rec.grad_norm_sq) << ','
        << format_double(rec.rho) << ',' << format_double(rec.snr_min) << ','
        << format_double(rec.wall_ms) << '\n';
  }
}

inline void write_metrics(const std::vector<MetricsRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_metrics(out, records);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<MetricsRecord> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("missing metrics header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw FormatError("expected 9 columns, got " + std::to_string(cells.size()));
    MetricsRecord rec;
    rec.scheme = cells[0];
    rec.trial = std::stoi(cells[1]);
    rec.round = std::stoi(cells[2]);
    rec.train_loss = detail::parse_double(cells[3]);
    rec.test_accuracy = detail::parse_double(cells[4]);
    rec.grad_norm_sq = detail::parse_double(cells[5]);
    rec.rho = detail::parse_double(cells[6]);
    rec.snr_min = detail::parse_double(cells[7]);
    rec.wall_ms = detail::parse_double(cells[8]);
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_metrics(in);
}

}  // namespace ncairfl
