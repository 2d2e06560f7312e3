#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tape records every op whose inputs require gradients while it is the
// active tape of the calling thread (see Tape::Scope). One tape covers one
// forward/backward step and is discarded afterwards.

#include <concepts>
#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "signet/common.hpp"

namespace signet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
      if (d == 0) fail("tensor: zero-sized dimension in shape ", shape_str(shape));
    }
    if (shape.empty()) fail("tensor: empty shape");
    if (shape_numel(shape) != values.size()) {
      fail("tensor: shape ", shape_str(shape), " needs ", shape_numel(shape), " values, got ",
           values.size());
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  /// Writable view; reserved for in-place parameter updates.
  std::span<T> mutable_data() { return impl_->data; }
  std::vector<T> to_vector() const { return impl_->data; }

  T item() const {
    if (numel() != 1) fail("item: tensor of shape ", shape_str(shape()), " is not a scalar");
    return impl_->data[0];
  }

  T at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) fail("at: rank mismatch");
    std::size_t flat = 0;
    std::size_t i = 0;
    for (auto v : index) {
      if (v >= impl_->shape[i]) fail("at: index out of range");
      flat = flat * impl_->shape[i] + v;
      ++i;
    }
    return impl_->data[flat];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }

  /// Gradient accumulator, zero-filled on first use.
  std::span<T> grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void clear_grad() const { impl_->grad.clear(); }

  /// Copy of the values that does not participate in differentiation.
  Tensor detach() const { return Tensor(shape(), impl_->data); }

  Tensor reshaped(Shape shape) const;

  /// Identity of the underlying storage; parameters are keyed by it.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    mutable std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

template <std::floating_point T>
Tensor<T> tensor_from(Shape shape, std::vector<T> values) {
  return Tensor<T>(std::move(shape), std::move(values));
}

template <std::floating_point T>
class GradientMap {
 public:
  void insert(const Tensor<T>& param, Tensor<T> grad) { grads_[param.id()] = std::move(grad); }
  bool contains(const Tensor<T>& param) const { return grads_.count(param.id()) != 0; }
  const Tensor<T>& at(const Tensor<T>& param) const {
    auto it = grads_.find(param.id());
    if (it == grads_.end()) fail("gradient map: parameter has no gradient");
    return it->second;
  }
  const Tensor<T>* find(const Tensor<T>& param) const {
    auto it = grads_.find(param.id());
    return it == grads_.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return grads_.size(); }
  bool empty() const { return grads_.empty(); }

 private:
  std::unordered_map<const void*, Tensor<T>> grads_;
};

template <std::floating_point T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string kind;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  /// Makes a tape the thread's recording target for the lifetime of the scope.
  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(current()) { current() = &tape; }
    ~Scope() { current() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() { return current(); }

  void record(std::string kind, std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn fn) {
    nodes_.push_back({std::move(kind), std::move(inputs), std::move(output), std::move(fn)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Reverse sweep from a scalar loss. Returns gradients of every leaf tensor
  /// (requires_grad, not produced by a recorded op) the loss depends on.
  GradientMap<T> backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) fail("backward: loss must be a single element, got ", shape_str(loss.shape()));
    GradientMap<T> out;

    std::unordered_set<const void*> live{loss.id()};
    std::vector<bool> node_live(nodes_.size(), false);
    std::unordered_set<const void*> produced;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const auto& node = nodes_[i];
      produced.insert(node.output.id());
      if (!live.count(node.output.id())) continue;
      node_live[i] = true;
      for (const auto& in : node.inputs) {
        if (in.requires_grad()) live.insert(in.id());
      }
    }
    if (!produced.count(loss.id())) return out;

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!node_live[i]) continue;
      nodes_[i].output.clear_grad();
      for (const auto& in : nodes_[i].inputs) in.clear_grad();
    }
    loss.grad_buffer()[0] = T(1);

    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (!node_live[i] || !nodes_[i].output.has_grad()) continue;
      nodes_[i].backward();
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!node_live[i]) continue;
      for (const auto& in : nodes_[i].inputs) {
        if (!in.requires_grad() || produced.count(in.id()) || out.contains(in)) continue;
        std::vector<T> g = in.has_grad() ? std::vector<T>(in.grad().begin(), in.grad().end())
                                         : std::vector<T>(in.numel(), T(0));
        out.insert(in, Tensor<T>(in.shape(), std::move(g)));
      }
    }
    return out;
  }

 private:
  static Tape*& current() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <std::floating_point T>
void check_finite([[maybe_unused]] std::span<const T> values, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (T v : values) {
    if (!std::isfinite(v)) fail(op, ": produced a non-finite value");
  }
#endif
}

/// Wraps a forward result and records it when any input is being differentiated.
/// The backward closure receives the output tensor (whose grad is populated).
template <std::floating_point T, typename Backward>
Tensor<T> finish(const char* kind, std::vector<Tensor<T>> inputs, Shape shape, std::vector<T> values,
                 Backward&& backward) {
  check_finite<T>(values, kind);
  Tensor<T> out(std::move(shape), std::move(values));
  Tape<T>* tape = Tape<T>::active();
  bool track = false;
  if (tape) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (!track) return out;
  out.set_requires_grad(true);
  Tensor<T> out_ref = out;
  tape->record(kind, inputs, out,
               [out_ref, fn = std::forward<Backward>(backward)]() mutable { fn(out_ref); });
  return out;
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> Tensor<T>::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    fail("reshape: cannot view ", shape_str(shape()), " as ", shape_str(new_shape));
  }
  Tensor<T> src = *this;
  return detail::finish<T>("reshape", {src}, std::move(new_shape), impl_->data, [src](const Tensor<T>& out) {
    if (!src.requires_grad()) return;
    auto g = src.grad_buffer();
    auto go = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise ops. Broadcasting is limited to tensor-with-scalar.
// ---------------------------------------------------------------------------

namespace detail {

template <std::floating_point T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  }
}

template <std::floating_point T>
void accumulate(const Tensor<T>& target, std::span<const T> delta, T scale = T(1)) {
  if (!target.requires_grad()) return;
  auto g = target.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * delta[i];
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
  return detail::finish<T>("add", {a, b}, a.shape(), std::move(v), [a, b](const Tensor<T>& out) {
    detail::accumulate(a, out.grad());
    detail::accumulate(b, out.grad());
  });
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, T s) {
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + s;
  return detail::finish<T>("add_scalar", {a}, a.shape(), std::move(v),
                           [a](const Tensor<T>& out) { detail::accumulate(a, out.grad()); });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] - b.data()[i];
  return detail::finish<T>("sub", {a, b}, a.shape(), std::move(v), [a, b](const Tensor<T>& out) {
    detail::accumulate(a, out.grad());
    detail::accumulate(b, out.grad(), T(-1));
  });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
  return detail::finish<T>("mul", {a, b}, a.shape(), std::move(v), [a, b](const Tensor<T>& out) {
    auto go = out.grad();
    if (a.requires_grad()) {
      auto g = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      auto g = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * a.data()[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * s;
  return detail::finish<T>("scalar_mul", {a}, a.shape(), std::move(v),
                           [a, s](const Tensor<T>& out) { detail::accumulate(a, out.grad(), s); });
}

template <std::floating_point T>
Tensor<T> square(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * a.data()[i];
  return detail::finish<T>("square", {a}, a.shape(), std::move(v), [a](const Tensor<T>& out) {
    if (!a.requires_grad()) return;
    auto g = a.grad_buffer();
    auto go = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(2) * a.data()[i] * go[i];
  });
}

/// Square root; the derivative at 0 is taken as 0.
template <std::floating_point T>
Tensor<T> sqrt(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (a.data()[i] < T(0)) fail("sqrt: negative input ", a.data()[i]);
    v[i] = std::sqrt(a.data()[i]);
  }
  return detail::finish<T>("sqrt", {a}, a.shape(), std::move(v), [a](const Tensor<T>& out) {
    if (!a.requires_grad()) return;
    auto g = a.grad_buffer();
    auto go = out.grad();
    auto y = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > T(0)) g[i] += go[i] / (T(2) * y[i]);
    }
  });
}

/// max(a, s) elementwise; ties route no gradient to a.
template <std::floating_point T>
Tensor<T> max_with_scalar(const Tensor<T>& a, T s) {
  std::vector<T> v(a.numel());
  // NaN passes through so a diverging network is not silently clipped.
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = !(a.data()[i] <= s) ? a.data()[i] : s;
  return detail::finish<T>("max_with_scalar", {a}, a.shape(), std::move(v), [a, s](const Tensor<T>& out) {
    if (!a.requires_grad()) return;
    auto g = a.grad_buffer();
    auto go = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (a.data()[i] > s) g[i] += go[i];
    }
  });
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  return detail::finish<T>("sum", {a}, {1}, {acc}, [a](const Tensor<T>& out) {
    if (!a.requires_grad()) return;
    const T go = out.grad()[0];
    for (auto& g : a.grad_buffer()) g += go;
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a) {
  return scalar_mul(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Sum over the last axis of a rank-2 tensor: [N, K] -> [N].
template <std::floating_point T>
Tensor<T> row_sum(const Tensor<T>& a) {
  if (a.rank() != 2) fail("row_sum: expected rank 2, got ", shape_str(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<T> v(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) v[r] += a.data()[r * cols + c];
  }
  return detail::finish<T>("row_sum", {a}, {rows}, std::move(v), [a, rows, cols](const Tensor<T>& out) {
    if (!a.requires_grad()) return;
    auto g = a.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += out.grad()[r];
    }
  });
}

/// [M, K] x [K, N] -> [M, N]. Backward: dA = dC B^T, dB = A^T dC.
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) fail("matmul: rank-2 operands required");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail("matmul: inner dimensions differ ", shape_str(a.shape()), " x ", shape_str(b.shape()));
  }
  std::vector<T> c(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  parallel_for(m, [&](std::size_t i) {
    T* row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  });
  return detail::finish<T>("matmul", {a, b}, {m, n}, std::move(c), [a, b, m, k, n](const Tensor<T>& out) {
    const T* G = out.grad().data();
    const T* A = a.data().data();
    const T* B = b.data().data();
    if (a.requires_grad()) {
      T* ga = a.grad_buffer().data();
      parallel_for(m, [&](std::size_t i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = T(0);
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
      });
    }
    if (b.requires_grad()) {
      T* gb = b.grad_buffer().data();
      parallel_for(k, [&](std::size_t p) {
        for (std::size_t i = 0; i < m; ++i) {
          const T av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
        }
      });
    }
  });
}

/// Converts between precisions; the result does not track gradients.
template <std::floating_point To, std::floating_point From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(v));
}

}  // namespace signet
