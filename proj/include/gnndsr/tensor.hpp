#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gnndsr/errors.hpp"

namespace gnndsr {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

std::string shape_str(const std::vector<int>& shape);
std::int64_t shape_numel(const std::vector<int>& shape);

// Dense row-major float64 tensor. A Tensor is a cheap handle to a shared
// node; copies alias the same storage. Data is treated as immutable while a
// tape is recording over it; mutable_data() is for the optimizer, parameter
// initialization, and finite-difference perturbations between passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const { return n_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(n_->data.size()); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<double>& data() const { return n_->data; }
  std::vector<double>& mutable_data() { return n_->data; }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { n_->grad.clear(); }

  // Value of a single-element tensor.
  double value() const;

  // Deep copy with fresh storage and no grad.
  Tensor clone() const;

  // Stable identity of the underlying storage, for registration checks.
  const void* id() const { return n_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : n_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> n_;
  friend class GradTape;
};

// Reverse-mode gradient tape. Every op that touches a requires_grad tensor
// records a backward closure; backward() replays them in reverse and
// accumulates (+=) into grads, so parameters shared across several subgraphs
// receive the sum of all path gradients. A tape and the forward pass it
// records are confined to one thread; independent tapes may run concurrently.
class GradTape {
 public:
  explicit GradTape(bool recording = true) : recording_(recording) {}

  // [m x k] @ [k x n] -> [m x n]; [m x k] @ [k] -> [m].
  Tensor matmul(const Tensor& a, const Tensor& b);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor hadamard(const Tensor& a, const Tensor& b);

  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor clamp(const Tensor& x, double lo, double hi);
  Tensor scale(const Tensor& x, double c);
  Tensor add_const(const Tensor& x, double c);

  // Concatenation along the last axis (1-D and 2-D tensors).
  Tensor concat(const Tensor& a, const Tensor& b);

  // Numerically stable softmax over a 1-D tensor.
  Tensor softmax(const Tensor& x);

  // Inverted dropout: zero with probability `rate`, scale survivors by
  // 1/(1-rate). Identity in eval mode and at rate 0 (returns x itself).
  Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

  Tensor sum(const Tensor& x);

  // Row i of a 2-D table (embedding lookup).
  Tensor row(const Tensor& table, int i);

  // Contiguous range [offset, offset+len) of a 1-D tensor.
  Tensor slice(const Tensor& x, int offset, int len);

  // Stack single-element tensors into a 1-D tensor.
  Tensor stack(const std::vector<Tensor>& scalars);

  // Element i of a 1-D tensor as a single-element tensor.
  Tensor index(const Tensor& x, int i);

  // Multiply every element of x by a single-element tensor.
  Tensor mul_scalar(const Tensor& x, const Tensor& s);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. One call per
  // tape; loss must be a single-element tensor.
  void backward(const Tensor& loss);

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }
  void clear();

 private:
  using NodePtr = std::shared_ptr<detail::TensorNode>;
  Tensor make_output(std::vector<int> shape, std::vector<double> data, bool needs_grad);
  bool track(const Tensor& t) const;
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
  bool backward_done_ = false;
};

}  // namespace gnndsr
