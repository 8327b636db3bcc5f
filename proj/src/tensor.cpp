#include "gnndsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gnndsr/rng.hpp"

namespace gnndsr {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const std::vector<int>& shape) {
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<detail::TensorNode>();
  n->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.n_->data.begin(), t.n_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  int n = static_cast<int>(values.size());
  return from_data({n}, std::move(values), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  if (n_->grad.empty()) throw Error("tensor has no gradient; run backward() first");
  return n_->grad;
}

double Tensor::value() const {
  if (size() != 1) throw DimensionError("value() needs a single-element tensor, got " + shape_str(shape()));
  return n_->data[0];
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = n_->shape;
  n->data = n_->data;
  n->requires_grad = n_->requires_grad;
  return Tensor(std::move(n));
}

bool GradTape::track(const Tensor& t) const {
  return recording_ && t.n_->requires_grad;
}

Tensor GradTape::make_output(std::vector<int> shape, std::vector<double> data, bool needs_grad) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = needs_grad;
  return Tensor(std::move(n));
}

void GradTape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

Tensor GradTape::matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || (bs.size() != 2 && bs.size() != 1) ||
      as[1] != bs[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  }
  const int m = as[0], k = as[1];
  const int n = bs.size() == 2 ? bs[1] : 1;
  const bool vec = bs.size() == 1;
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < k; ++c) {
      const double av = ad[i * k + c];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out[i * n + j] += av * bd[c * n + j];
    }
  }
  const bool needs = track(a) || track(b);
  Tensor res = make_output(vec ? std::vector<int>{m} : std::vector<int>{m, n}, std::move(out), needs);
  if (needs) {
    record([an = a.n_, bn = b.n_, on = res.n_, m, k, n] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int c = 0; c < k; ++c) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += g[i * n + j] * bn->data[c * n + j];
            an->grad[i * k + c] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int c = 0; c < k; ++c)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += an->data[i * k + c] * g[i * n + j];
            bn->grad[c * n + j] += acc;
          }
      }
    });
  }
  return res;
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor GradTape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  const bool needs = track(a) || track(b);
  Tensor res = make_output(a.shape(), std::move(out), needs);
  if (needs) {
    record([an = a.n_, bn = b.n_, on = res.n_] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return res;
}

Tensor GradTape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  const bool needs = track(a) || track(b);
  Tensor res = make_output(a.shape(), std::move(out), needs);
  if (needs) {
    record([an = a.n_, bn = b.n_, on = res.n_] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return res;
}

Tensor GradTape::hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape("hadamard", a, b);
  std::vector<double> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  const bool needs = track(a) || track(b);
  Tensor res = make_output(a.shape(), std::move(out), needs);
  if (needs) {
    record([an = a.n_, bn = b.n_, on = res.n_] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->data[i];
      }
    });
  }
  return res;
}

Tensor GradTape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->data[i];
        xn->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return res;
}

Tensor GradTape::tanh(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = std::tanh(v);
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->data[i];
        xn->grad[i] += on->grad[i] * (1.0 - y * y);
      }
    });
  }
  return res;
}

Tensor GradTape::relu(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (xn->data[i] > 0.0) xn->grad[i] += on->grad[i];
      }
    });
  }
  return res;
}

Tensor GradTape::log(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) {
    if (v <= 0.0) throw DomainError("log: non-positive input " + std::to_string(v));
    v = std::log(v);
  }
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] / xn->data[i];
    });
  }
  return res;
}

Tensor GradTape::clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lo > hi");
  std::vector<double> out(x.data());
  for (double& v : out) v = std::min(hi, std::max(lo, v));
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_, lo, hi] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (xn->data[i] > lo && xn->data[i] < hi) xn->grad[i] += on->grad[i];
      }
    });
  }
  return res;
}

Tensor GradTape::scale(const Tensor& x, double c) {
  std::vector<double> out(x.data());
  for (double& v : out) v *= c;
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_, c] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * c;
    });
  }
  return res;
}

Tensor GradTape::add_const(const Tensor& x, double c) {
  std::vector<double> out(x.data());
  for (double& v : out) v += c;
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return res;
}

Tensor GradTape::concat(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != bs.size() || as.empty() || as.size() > 2 ||
      (as.size() == 2 && as[0] != bs[0])) {
    throw DimensionError("concat: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  }
  const int rows = as.size() == 2 ? as[0] : 1;
  const int d1 = as.back(), d2 = bs.back();
  std::vector<double> out(static_cast<std::size_t>(rows) * (d1 + d2));
  for (int r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + static_cast<std::size_t>(r) * d1, d1, out.begin() + static_cast<std::size_t>(r) * (d1 + d2));
    std::copy_n(b.data().begin() + static_cast<std::size_t>(r) * d2, d2, out.begin() + static_cast<std::size_t>(r) * (d1 + d2) + d1);
  }
  std::vector<int> oshape = as;
  oshape.back() = d1 + d2;
  const bool needs = track(a) || track(b);
  Tensor res = make_output(std::move(oshape), std::move(out), needs);
  if (needs) {
    record([an = a.n_, bn = b.n_, on = res.n_, rows, d1, d2] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (int r = 0; r < rows; ++r)
          for (int i = 0; i < d1; ++i) an->grad[r * d1 + i] += g[r * (d1 + d2) + i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int r = 0; r < rows; ++r)
          for (int i = 0; i < d2; ++i) bn->grad[r * d2 + i] += g[r * (d1 + d2) + d1 + i];
      }
    });
  }
  return res;
}

Tensor GradTape::softmax(const Tensor& x) {
  if (x.shape().size() != 1) throw DimensionError("softmax: expected 1-D tensor, got " + shape_str(x.shape()));
  if (x.size() == 0) throw DomainError("softmax: empty input");
  std::vector<double> out(x.data());
  const double mx = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : out) v /= total;
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < on->grad.size(); ++i) dot += on->grad[i] * on->data[i];
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += on->data[i] * (on->grad[i] - dot);
    });
  }
  return res;
}

Tensor GradTape::dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw DomainError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.data().size());
  for (double& m : mask) m = next_double(rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const bool needs = track(x);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_, mask = std::move(mask)] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * mask[i];
    });
  }
  return res;
}

Tensor GradTape::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool needs = track(x);
  Tensor res = make_output({1}, {total}, needs);
  if (needs) {
    record([xn = x.n_, on = res.n_] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (double& g : xn->grad) g += on->grad[0];
    });
  }
  return res;
}

Tensor GradTape::row(const Tensor& table, int i) {
  const auto& s = table.shape();
  if (s.size() != 2) throw DimensionError("row: expected 2-D table, got " + shape_str(s));
  if (i < 0 || i >= s[0]) {
    throw LookupError("row index " + std::to_string(i) + " out of range [0, " +
                      std::to_string(s[0]) + ")");
  }
  const int cols = s[1];
  std::vector<double> out(table.data().begin() + static_cast<std::size_t>(i) * cols,
                          table.data().begin() + static_cast<std::size_t>(i + 1) * cols);
  const bool needs = track(table);
  Tensor res = make_output({cols}, std::move(out), needs);
  if (needs) {
    record([tn = table.n_, on = res.n_, i, cols] {
      if (on->grad.empty()) return;
      tn->ensure_grad();
      for (int c = 0; c < cols; ++c) tn->grad[static_cast<std::size_t>(i) * cols + c] += on->grad[c];
    });
  }
  return res;
}

Tensor GradTape::slice(const Tensor& x, int offset, int len) {
  if (x.shape().size() != 1) throw DimensionError("slice: expected 1-D tensor, got " + shape_str(x.shape()));
  if (offset < 0 || len < 0 || offset + len > x.shape()[0]) {
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + len) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + offset, x.data().begin() + offset + len);
  const bool needs = track(x);
  Tensor res = make_output({len}, std::move(out), needs);
  if (needs) {
    record([xn = x.n_, on = res.n_, offset, len] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (int i = 0; i < len; ++i) xn->grad[offset + i] += on->grad[i];
    });
  }
  return res;
}

Tensor GradTape::stack(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw DomainError("stack: empty input");
  std::vector<double> out;
  out.reserve(scalars.size());
  bool needs = false;
  for (const Tensor& s : scalars) {
    if (s.size() != 1) throw DimensionError("stack: expected single-element tensors, got " + shape_str(s.shape()));
    out.push_back(s.data()[0]);
    needs = needs || track(s);
  }
  Tensor res = make_output({static_cast<int>(scalars.size())}, std::move(out), needs);
  if (needs) {
    std::vector<NodePtr> ins;
    ins.reserve(scalars.size());
    for (const Tensor& s : scalars) ins.push_back(s.n_);
    record([ins = std::move(ins), on = res.n_] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < ins.size(); ++i) {
        if (!ins[i]->requires_grad) continue;
        ins[i]->ensure_grad();
        ins[i]->grad[0] += on->grad[i];
      }
    });
  }
  return res;
}

Tensor GradTape::index(const Tensor& x, int i) {
  if (x.shape().size() != 1) throw DimensionError("index: expected 1-D tensor, got " + shape_str(x.shape()));
  if (i < 0 || i >= x.shape()[0]) {
    throw LookupError("index " + std::to_string(i) + " out of range [0, " +
                      std::to_string(x.shape()[0]) + ")");
  }
  const bool needs = track(x);
  Tensor res = make_output({1}, {x.data()[i]}, needs);
  if (needs) {
    record([xn = x.n_, on = res.n_, i] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      xn->grad[i] += on->grad[0];
    });
  }
  return res;
}

Tensor GradTape::mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: scalar argument has shape " + shape_str(s.shape()));
  const double sv = s.data()[0];
  std::vector<double> out(x.data());
  for (double& v : out) v *= sv;
  const bool needs = track(x) || track(s);
  Tensor res = make_output(x.shape(), std::move(out), needs);
  if (needs) {
    record([xn = x.n_, sn = s.n_, on = res.n_] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * sn->data[0];
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < on->grad.size(); ++i) acc += on->grad[i] * xn->data[i];
        sn->grad[0] += acc;
      }
    });
  }
  return res;
}

void GradTape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward: loss must be a single element, got " + shape_str(loss.shape()));
  }
  if (backward_done_) throw Error("backward: tape already replayed");
  backward_done_ = true;
  loss.n_->ensure_grad();
  loss.n_->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace gnndsr
