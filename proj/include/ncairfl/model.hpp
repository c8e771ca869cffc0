#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ncairfl/data.hpp"
#include "ncairfl/errors.hpp"
#include "ncairfl/rng.hpp"

namespace ncairfl {

// Flat parameter / gradient / model-difference vector.
using ParamVector = Eigen::VectorXd;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Input -> ReLU hidden layer -> softmax output.
struct MlpShape {
  int inputs = 784;
  int hidden = 100;
  int outputs = kNumClasses;

  Eigen::Index param_count() const {
    return Eigen::Index{inputs} * hidden + hidden + Eigen::Index{hidden} * outputs + outputs;
  }
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

// Weights are stored as (fan_in x fan_out) so a batch forward pass is X * w1.
// Flattening order: w1 row-major, b1, w2 row-major, b2.
struct MlpParams {
  RowMatrix w1;
  Eigen::VectorXd b1;
  RowMatrix w2;
  Eigen::VectorXd b2;

  static MlpParams zeros(const MlpShape& s) {
    MlpParams p;
    p.w1 = RowMatrix::Zero(s.inputs, s.hidden);
    p.b1 = Eigen::VectorXd::Zero(s.hidden);
    p.w2 = RowMatrix::Zero(s.hidden, s.outputs);
    p.b2 = Eigen::VectorXd::Zero(s.outputs);
    return p;
  }

  MlpShape shape() const {
    return {static_cast<int>(w1.rows()), static_cast<int>(w1.cols()), static_cast<int>(w2.cols())};
  }

  ParamVector flatten() const {
    ParamVector v(shape().param_count());
    Eigen::Index pos = 0;
    auto put = [&](const double* src, Eigen::Index n) {
      std::copy(src, src + n, v.data() + pos);
      pos += n;
    };
    put(w1.data(), w1.size());
    put(b1.data(), b1.size());
    put(w2.data(), w2.size());
    put(b2.data(), b2.size());
    return v;
  }

  static MlpParams unflatten(const MlpShape& s, const ParamVector& v) {
    check_same_length(static_cast<std::size_t>(v.size()), static_cast<std::size_t>(s.param_count()),
                      "MlpParams::unflatten");
    MlpParams p = zeros(s);
    Eigen::Index pos = 0;
    auto take = [&](double* dst, Eigen::Index n) {
      std::copy(v.data() + pos, v.data() + pos + n, dst);
      pos += n;
    };
    take(p.w1.data(), p.w1.size());
    take(p.b1.data(), p.b1.size());
    take(p.w2.data(), p.w2.size());
    take(p.b2.data(), p.b2.size());
    return p;
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }
};

// Glorot-uniform weights, zero biases.
inline MlpParams init_params(const MlpShape& s, RngStream& rng) {
  MlpParams p = MlpParams::zeros(s);
  const double a1 = std::sqrt(6.0 / (s.inputs + s.hidden));
  const double a2 = std::sqrt(6.0 / (s.hidden + s.outputs));
  for (Eigen::Index k = 0; k < p.w1.size(); ++k) p.w1.data()[k] = rng.uniform(-a1, a1);
  for (Eigen::Index k = 0; k < p.w2.size(); ++k) p.w2.data()[k] = rng.uniform(-a2, a2);
  return p;
}

struct ForwardResult {
  double loss = 0.0;
  RowMatrix probabilities;  // B x outputs
};

namespace detail {

struct ForwardCache {
  RowMatrix pre_hidden;  // B x hidden, before ReLU
  RowMatrix hidden;      // B x hidden
  RowMatrix probs;       // B x outputs
  double loss = 0.0;
};

inline void check_batch(const MlpParams& params, const FeatureMatrix& x, std::size_t n_labels) {
  if (x.rows() == 0) throw DomainError("empty batch");
  check_same_length(static_cast<std::size_t>(x.rows()), n_labels, "batch features vs labels");
  check_same_length(static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(params.w1.rows()),
                    "batch feature width vs model inputs");
}

inline ForwardCache forward(const MlpParams& params, const FeatureMatrix& x,
                            const std::vector<int>& labels) {
  check_batch(params, x, labels.size());
  ForwardCache c;
  c.pre_hidden = (x * params.w1).rowwise() + params.b1.transpose();
  c.hidden = c.pre_hidden.cwiseMax(0.0);
  RowMatrix logits = (c.hidden * params.w2).rowwise() + params.b2.transpose();
  if (!logits.allFinite()) {
    throw NumericOverflowError("non-finite logits (learning rate or initialization too large?)");
  }
  c.probs.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    auto shifted = (logits.row(r).array() - peak).eval();
    const double log_norm = std::log(shifted.exp().sum());
    c.probs.row(r) = (shifted - log_norm).exp().matrix();
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw DomainError("label out of range");
    total -= shifted(y) - log_norm;
  }
  c.loss = total / static_cast<double>(logits.rows());
  if (!std::isfinite(c.loss)) throw NumericOverflowError("non-finite loss");
  return c;
}

}  // namespace detail

// Mean softmax cross-entropy over the batch and the per-sample class
// probabilities.
inline ForwardResult forward_loss(const MlpParams& params, const FeatureMatrix& features,
                                  const std::vector<int>& labels) {
  auto c = detail::forward(params, features, labels);
  return {c.loss, std::move(c.probs)};
}

inline ForwardResult forward_loss(const MlpParams& params, const Batch& batch) {
  return forward_loss(params, batch.features, batch.labels);
}

struct LossAndGradient {
  double loss = 0.0;
  MlpParams grad;
};

inline LossAndGradient loss_and_gradient(const MlpParams& params, const FeatureMatrix& x,
                                         const std::vector<int>& labels) {
  auto c = detail::forward(params, x, labels);
  const double inv_b = 1.0 / static_cast<double>(x.rows());

  RowMatrix d_logits = c.probs;
  for (Eigen::Index r = 0; r < d_logits.rows(); ++r) d_logits(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  d_logits *= inv_b;

  LossAndGradient out;
  out.loss = c.loss;
  out.grad.w2 = c.hidden.transpose() * d_logits;
  out.grad.b2 = d_logits.colwise().sum().transpose();
  RowMatrix d_hidden = d_logits * params.w2.transpose();
  d_hidden = (c.pre_hidden.array() > 0.0).select(d_hidden, 0.0);
  out.grad.w1 = x.transpose() * d_hidden;
  out.grad.b1 = d_hidden.colwise().sum().transpose();
  return out;
}

// Exact gradient of forward_loss with respect to every parameter.
inline MlpParams gradient(const MlpParams& params, const Batch& batch) {
  return loss_and_gradient(params, batch.features, batch.labels).grad;
}

struct LocalUpdateResult {
  ParamVector delta;                     // theta0 - theta after Q steps
  std::vector<double> step_grad_norms;   // ||grad|| at each local step
  double max_grad_norm = 0.0;
  bool with_replacement = false;         // some batch exceeded the partition
};

// Q steps of mini-batch SGD starting from theta0 on one device's samples.
inline LocalUpdateResult local_update(const MlpShape& shape, const ParamVector& theta0,
                                      const Dataset& data, const DevicePartition& part, int local_steps,
                                      double eta, std::size_t batch_size, RngStream& rng) {
  if (local_steps < 1) throw DomainError("local step count Q must be >= 1");
  if (eta < 0.0) throw DomainError("learning rate must be non-negative");
  if (part.sample_indices.empty()) throw DomainError("empty device partition");

  MlpParams params = MlpParams::unflatten(shape, theta0);
  LocalUpdateResult out;
  out.step_grad_norms.reserve(static_cast<std::size_t>(local_steps));
  for (int q = 0; q < local_steps; ++q) {
    Batch batch = sample_batch(data, part, batch_size, rng);
    out.with_replacement |= batch.with_replacement;
    MlpParams g = gradient(params, batch);
    const double norm = std::sqrt(g.w1.squaredNorm() + g.b1.squaredNorm() + g.w2.squaredNorm() +
                                  g.b2.squaredNorm());
    out.step_grad_norms.push_back(norm);
    out.max_grad_norm = std::max(out.max_grad_norm, norm);
    params.w1 -= eta * g.w1;
    params.b1 -= eta * g.b1;
    params.w2 -= eta * g.w2;
    params.b2 -= eta * g.b2;
  }
  out.delta = theta0 - params.flatten();
  return out;
}

// Classification accuracy (argmax, ties to the lowest class index) and mean
// cross-entropy over a whole data set, evaluated in chunks.
struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline Evaluation evaluate(const MlpShape& shape, const ParamVector& theta, const Dataset& data,
                           Eigen::Index chunk = 2000) {
  const MlpParams params = MlpParams::unflatten(shape, theta);
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  if (n == 0) throw DomainError("empty evaluation set");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    FeatureMatrix x = data.features.middleRows(start, len);
    std::vector<int> y(data.labels.begin() + start, data.labels.begin() + start + len);
    auto res = forward_loss(params, x, y);
    loss_sum += res.loss * static_cast<double>(len);
    for (Eigen::Index r = 0; r < len; ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < res.probabilities.cols(); ++c) {
        if (res.probabilities(r, c) > res.probabilities(r, best)) best = c;
      }
      if (best == y[static_cast<std::size_t>(r)]) ++correct;
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(n),
          loss_sum / static_cast<double>(n)};
}

}  // namespace ncairfl
