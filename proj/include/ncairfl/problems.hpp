#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <cstddef>
#include <numeric>
#include <vector>

#include "ncairfl/data.hpp"
#include "ncairfl/errors.hpp"
#include "ncairfl/model.hpp"
#include "ncairfl/rng.hpp"

namespace ncairfl {

// Loss and squared gradient norm on a fixed probe set.
struct ProbeStats {
  double loss = 0.0;
  double grad_norm_sq = 0.0;
};

// What a round function needs from a learning task: dimension, device count,
// local SGD on one device, a probe of the global objective and a held-out
// evaluation.
template <class P>
concept FederatedProblem = requires(const P& p, const ParamVector& theta, RngStream& rng) {
  { p.dim() } -> std::convertible_to<Eigen::Index>;
  { p.num_devices() } -> std::convertible_to<int>;
  { p.local_update(theta, 0, 1, 0.1, rng) } -> std::same_as<LocalUpdateResult>;
  { p.probe(theta) } -> std::same_as<ProbeStats>;
  { p.evaluate(theta) } -> std::same_as<Evaluation>;
  { p.initial_params(rng) } -> std::same_as<ParamVector>;
};

// MLP classification over partitioned image data.
class MlpProblem {
 public:
  MlpProblem(MlpShape shape, const Dataset& train, const Dataset& test,
             std::vector<DevicePartition> partitions, std::size_t batch_size, Batch probe_batch)
      : shape_(shape),
        train_(&train),
        test_(&test),
        partitions_(std::move(partitions)),
        batch_size_(batch_size),
        probe_(std::move(probe_batch)) {
    if (partitions_.empty()) throw DomainError("no device partitions");
  }

  Eigen::Index dim() const { return shape_.param_count(); }
  int num_devices() const { return static_cast<int>(partitions_.size()); }
  const MlpShape& shape() const { return shape_; }
  const std::vector<DevicePartition>& partitions() const { return partitions_; }

  LocalUpdateResult local_update(const ParamVector& theta, int device, int local_steps, double eta,
                                 RngStream& rng) const {
    return ncairfl::local_update(shape_, theta, *train_, partitions_.at(static_cast<std::size_t>(device)),
                                 local_steps, eta, batch_size_, rng);
  }

  ProbeStats probe(const ParamVector& theta) const {
    auto res = loss_and_gradient(MlpParams::unflatten(shape_, theta), probe_.features, probe_.labels);
    const auto& g = res.grad;
    return {res.loss, g.w1.squaredNorm() + g.b1.squaredNorm() + g.w2.squaredNorm() + g.b2.squaredNorm()};
  }

  Evaluation evaluate(const ParamVector& theta) const { return ncairfl::evaluate(shape_, theta, *test_); }

  ParamVector initial_params(RngStream& rng) const { return init_params(shape_, rng).flatten(); }

 private:
  MlpShape shape_;
  const Dataset* train_;
  const Dataset* test_;
  std::vector<DevicePartition> partitions_;
  std::size_t batch_size_;
  Batch probe_;
};

// Least squares: f_i(theta) = (1 / 2|D_i|) sum_{k in D_i} (a_k . theta - b_k)^2,
// f = (1/n) sum_i f_i. Every constant of the smooth non-convex analysis is
// available in closed form here.
class QuadraticProblem {
 public:
  QuadraticProblem(const RegressionSet& data, std::vector<DevicePartition> partitions,
                   std::size_t batch_size)
      : data_(&data), partitions_(std::move(partitions)), batch_size_(batch_size) {
    if (partitions_.empty()) throw DomainError("no device partitions");
    for (const auto& part : partitions_) {
      Eigen::MatrixXd a(static_cast<Eigen::Index>(part.sample_indices.size()), data.dims());
      Eigen::VectorXd b(a.rows());
      for (Eigen::Index k = 0; k < a.rows(); ++k) {
        a.row(k) = data.features.row(static_cast<Eigen::Index>(part.sample_indices[static_cast<std::size_t>(k)]));
        b(k) = data.targets(static_cast<Eigen::Index>(part.sample_indices[static_cast<std::size_t>(k)]));
      }
      local_a_.push_back(std::move(a));
      local_b_.push_back(std::move(b));
    }
  }

  Eigen::Index dim() const { return data_->dims(); }
  int num_devices() const { return static_cast<int>(partitions_.size()); }

  Eigen::VectorXd local_gradient(const ParamVector& theta, int device) const {
    const auto& a = local_a_.at(static_cast<std::size_t>(device));
    const auto& b = local_b_.at(static_cast<std::size_t>(device));
    return a.transpose() * (a * theta - b) / static_cast<double>(a.rows());
  }

  Eigen::VectorXd full_gradient(const ParamVector& theta) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    for (int i = 0; i < num_devices(); ++i) g += local_gradient(theta, i);
    return g / static_cast<double>(num_devices());
  }

  double loss(const ParamVector& theta) const {
    double total = 0.0;
    for (std::size_t i = 0; i < local_a_.size(); ++i) {
      total += 0.5 * (local_a_[i] * theta - local_b_[i]).squaredNorm() /
               static_cast<double>(local_a_[i].rows());
    }
    return total / static_cast<double>(local_a_.size());
  }

  // Largest local Hessian eigenvalue: every f_i is L-smooth with this L.
  double smoothness() const {
    double best = 0.0;
    for (const auto& a : local_a_) {
      Eigen::MatrixXd hess = a.transpose() * a / static_cast<double>(a.rows());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess, Eigen::EigenvaluesOnly);
      best = std::max(best, es.eigenvalues().maxCoeff());
    }
    return best;
  }

  // Exact minimizer of f (normal equations of the device-averaged objective).
  ParamVector minimizer() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim(), dim());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim());
    for (std::size_t i = 0; i < local_a_.size(); ++i) {
      const double w = 1.0 / static_cast<double>(local_a_[i].rows());
      h += w * local_a_[i].transpose() * local_a_[i];
      rhs += w * local_a_[i].transpose() * local_b_[i];
    }
    return h.ldlt().solve(rhs);
  }

  LocalUpdateResult local_update(const ParamVector& theta, int device, int local_steps, double eta,
                                 RngStream& rng) const {
    if (local_steps < 1) throw DomainError("local step count Q must be >= 1");
    const auto& a = local_a_.at(static_cast<std::size_t>(device));
    const auto& b = local_b_[static_cast<std::size_t>(device)];
    const auto local_size = static_cast<std::size_t>(a.rows());

    LocalUpdateResult out;
    ParamVector current = theta;
    for (int q = 0; q < local_steps; ++q) {
      // Same sampling rule as the image path, over local row numbers.
      std::vector<std::size_t> rows;
      if (batch_size_ > local_size) {
        out.with_replacement = true;
        for (std::size_t k = 0; k < batch_size_; ++k) rows.push_back(rng.below(local_size));
      } else {
        std::vector<std::size_t> scratch(local_size);
        std::iota(scratch.begin(), scratch.end(), std::size_t{0});
        for (std::size_t k = 0; k < batch_size_; ++k) {
          const std::size_t j = k + rng.below(scratch.size() - k);
          std::swap(scratch[k], scratch[j]);
          rows.push_back(scratch[k]);
        }
      }
      Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
      for (std::size_t row : rows) {
        const auto r = static_cast<Eigen::Index>(row);
        g += a.row(r).transpose() * (a.row(r).dot(current) - b(r));
      }
      g /= static_cast<double>(rows.size());
      const double norm = g.norm();
      out.step_grad_norms.push_back(norm);
      out.max_grad_norm = std::max(out.max_grad_norm, norm);
      current -= eta * g;
    }
    out.delta = theta - current;
    return out;
  }

  ProbeStats probe(const ParamVector& theta) const { return {loss(theta), full_gradient(theta).squaredNorm()}; }

  // No classes here: accuracy is reported as 0 and loss is the global objective.
  Evaluation evaluate(const ParamVector& theta) const { return {0.0, loss(theta)}; }

  ParamVector initial_params(RngStream&) const { return ParamVector::Zero(dim()); }

 private:
  const RegressionSet* data_;
  std::vector<DevicePartition> partitions_;
  std::size_t batch_size_;
  std::vector<Eigen::MatrixXd> local_a_;
  std::vector<Eigen::VectorXd> local_b_;
};

static_assert(FederatedProblem<MlpProblem>);
static_assert(FederatedProblem<QuadraticProblem>);

}  // namespace ncairfl
