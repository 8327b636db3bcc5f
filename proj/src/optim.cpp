#include "gnndsr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gnndsr {

Rmsprop::Rmsprop(std::vector<Tensor> params, RmspropConfig config)
    : params_(std::move(params)), config_(config) {
  if (config_.learning_rate < 0.0) throw DomainError("rmsprop: negative learning rate");
  if (config_.decay <= 0.0 || config_.decay >= 1.0) throw DomainError("rmsprop: decay outside (0, 1)");
  if (config_.epsilon <= 0.0) throw DomainError("rmsprop: epsilon must be positive");
  std::unordered_set<const void*> seen;
  cache_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.requires_grad()) throw ValidationError("rmsprop: parameter does not require grad");
    if (!seen.insert(p.id()).second) throw ValidationError("rmsprop: parameter registered twice");
    cache_.emplace_back(p.data().size(), 0.0);
  }
}

void Rmsprop::step() {
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    auto& cache = cache_[pi];
    auto& data = p.mutable_data();
    if (!p.has_grad()) {
      for (double& c : cache) c *= config_.decay;
      continue;
    }
    const auto& g = p.grad();
    if (g.size() != data.size()) {
      throw DimensionError("rmsprop: grad length " + std::to_string(g.size()) +
                           " does not match parameter length " + std::to_string(data.size()));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      cache[i] = config_.decay * cache[i] + (1.0 - config_.decay) * g[i] * g[i];
      data[i] -= config_.learning_rate * g[i] / (std::sqrt(cache[i]) + config_.epsilon);
    }
  }
}

void Rmsprop::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double grad_check(const std::function<Tensor(GradTape&)>& f, Tensor x, double eps) {
  if (eps <= 0.0) throw DomainError("grad_check: eps must be positive");
  if (!x.requires_grad()) throw DomainError("grad_check: tensor does not require grad");

  x.zero_grad();
  std::vector<double> autodiff;
  {
    GradTape tape;
    Tensor loss = f(tape);
    if (loss.size() != 1) {
      throw DimensionError("grad_check: f must be scalar-valued, got " + shape_str(loss.shape()));
    }
    tape.backward(loss);
    autodiff = x.has_grad() ? x.grad() : std::vector<double>(x.data().size(), 0.0);
    x.zero_grad();
  }

  auto eval = [&f]() {
    GradTape tape(false);
    return f(tape).value();
  };

  double max_err = 0.0;
  auto& data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = eval();
    data[i] = saved - eps;
    const double down = eval();
    data[i] = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double err = std::abs(autodiff[i] - fd) / std::max(1.0, std::abs(fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace gnndsr
