#pragma once

#include <functional>
#include <vector>

#include "gnndsr/tensor.hpp"

namespace gnndsr {

struct RmspropConfig {
  double learning_rate = 0.001;
  double decay = 0.9;
  double epsilon = 1e-8;
};

// RMSprop with a per-parameter running average of squared gradients:
//   cache <- decay * cache + (1 - decay) * g^2
//   param <- param - lr * g / (sqrt(cache) + eps)
// Parameters with no accumulated gradient are treated as g = 0 (the cache
// still decays). step() does not clear gradients; call zero_grad() after it.
class Rmsprop {
 public:
  Rmsprop(std::vector<Tensor> params, RmspropConfig config = {});

  void step();
  void zero_grad();

  const RmspropConfig& config() const { return config_; }
  const std::vector<double>& cache(std::size_t param_idx) const { return cache_[param_idx]; }
  std::size_t param_count() const { return params_.size(); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> cache_;
  RmspropConfig config_;
};

// Max over coordinates of |autodiff - central difference| / max(1, |central
// difference|) for a scalar-valued function f. f is re-evaluated with x
// perturbed in place, so it must read x's current data on every call.
double grad_check(const std::function<Tensor(GradTape&)>& f, Tensor x, double eps);

}  // namespace gnndsr
