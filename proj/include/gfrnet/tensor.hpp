#pragma once

// Dense 4-axis tensor (slice/batch n, channel c, height h, width w) with
// reverse-mode automatic differentiation. All operations are free functions
// returning new tensors; a tensor produced from gradient-tracked inputs is
// itself gradient-tracked. Memory layout is row-major in (n, c, h, w).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "gfrnet/errors.hpp"

namespace gfrnet {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  int axis(int i) const {
    switch (i) {
      case 0: return n;
      case 1: return c;
      case 2: return h;
      default: return w;
    }
  }
  bool operator==(const Shape& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

enum class Phase { train, eval };

template <class T>
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data when present
    bool requires_grad = false;
    std::vector<std::shared_ptr<Impl>> parents;
    std::function<void(Impl&)> backprop;  // accumulates self.grad into parents

    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
  };

  Tensor() : impl_(std::make_shared<Impl>()) {}

  explicit Tensor(Shape s, bool requires_grad = false) : impl_(std::make_shared<Impl>()) {
    require_shape(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
                  "tensor axes must be positive, got " + s.str());
    impl_->shape = s;
    impl_->data.assign(s.size(), T(0));
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape s, std::initializer_list<T> values, bool requires_grad = false)
      : Tensor(s, std::vector<T>(values), requires_grad) {}

  Tensor(Shape s, std::vector<T> values, bool requires_grad = false)
      : Tensor(s, requires_grad) {
    require_shape(values.size() == s.size(),
                  "data length " + std::to_string(values.size()) + " does not match shape " + s.str());
    impl_->data = std::move(values);
  }

  static Tensor full(Shape s, T v, bool requires_grad = false) {
    Tensor t(s, requires_grad);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), v);
    return t;
  }
  static Tensor zeros(Shape s, bool requires_grad = false) { return Tensor(s, requires_grad); }
  static Tensor ones(Shape s, bool requires_grad = false) { return full(s, T(1), requires_grad); }
  static Tensor scalar(T v, bool requires_grad = false) { return full({1, 1, 1, 1}, v, requires_grad); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->data.size(); }
  bool defined() const { return !impl_->data.empty(); }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  std::vector<T>& data() { return impl_->data; }
  const std::vector<T>& data() const { return impl_->data; }
  std::vector<T>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<T>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }

  T& at(int n, int c, int h, int w) { return impl_->data[index(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return impl_->data[index(n, c, h, w)]; }

  std::size_t index(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }

  T item() const {
    require_shape(size() == 1, "item() requires a scalar tensor, got " + shape().str());
    return impl_->data[0];
  }

  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  // Detaches from the graph; shares no autograd state with the source.
  Tensor detach() const {
    Tensor t(shape());
    t.impl_->data = impl_->data;
    return t;
  }

  // Reverse-mode backpropagation from a scalar. Gradients accumulate (sum
  // semantics) into every gradient-tracked tensor in the graph.
  void backward() {
    if (!impl_->requires_grad)
      throw UsageError("backward() called on a tensor that does not track gradients");
    if (size() != 1)
      throw UsageError("backward() requires a scalar loss, got shape " + shape().str());

    std::vector<Impl*> order = toposort(impl_.get());
    impl_->ensure_grad();
    impl_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Impl* node = *it;
      if (node->backprop) {
        node->ensure_grad();
        node->backprop(*node);
      }
    }
  }

  std::shared_ptr<Impl> impl() const { return impl_; }

 private:
  static std::vector<Impl*> toposort(Impl* root) {
    std::vector<Impl*> order;
    std::unordered_set<Impl*> visited;
    // Iterative post-order DFS; graphs can be deep (many conv layers).
    std::vector<std::pair<Impl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Impl* p = node->parents[next++].get();
        if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<Impl> impl_;
};

namespace detail {

template <class T>
using ImplPtr = std::shared_ptr<typename Tensor<T>::Impl>;

// Marks y as a child of its inputs and installs the backward rule when any
// input tracks gradients.
template <class T>
void attach(Tensor<T>& y, std::vector<ImplPtr<T>> parents,
            std::function<void(typename Tensor<T>::Impl&)> backprop) {
  bool tracked = false;
  for (const auto& p : parents) tracked = tracked || p->requires_grad;
  if (!tracked) return;
  y.impl()->requires_grad = true;
  y.impl()->parents = std::move(parents);
  y.impl()->backprop = std::move(backprop);
}

// Checks that b is broadcastable over a (each axis equal or 1) and returns
// the per-axis stretch flags.
template <class T>
std::array<bool, 4> broadcast_axes(const Tensor<T>& a, const Tensor<T>& b, const char* opname) {
  std::array<bool, 4> stretch{};
  for (int i = 0; i < 4; ++i) {
    int da = a.shape().axis(i), db = b.shape().axis(i);
    if (db == da) {
      stretch[i] = false;
    } else if (db == 1) {
      stretch[i] = true;
    } else {
      throw ShapeError(std::string(opname) + ": shape " + b.shape().str() +
                       " is not broadcastable over " + a.shape().str());
    }
  }
  return stretch;
}

template <class T>
std::size_t mapped_index(const Shape& bs, int n, int c, int h, int w) {
  int bn = bs.n == 1 ? 0 : n;
  int bc = bs.c == 1 ? 0 : c;
  int bh = bs.h == 1 ? 0 : h;
  int bw = bs.w == 1 ? 0 : w;
  return ((static_cast<std::size_t>(bn) * bs.c + bc) * bs.h + bh) * bs.w + bw;
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary operations with broadcasting (b broadcastable over a).
// ---------------------------------------------------------------------------

template <class T, class Fwd, class DA, class DB>
Tensor<T> binary_broadcast(const Tensor<T>& a, const Tensor<T>& b, const char* opname,
                           Fwd fwd, DA dfda, DB dfdb) {
  detail::broadcast_axes(a, b, opname);
  const Shape s = a.shape();
  Tensor<T> y(s);
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& yd = y.data();
  const Shape bs = b.shape();
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w, ++i)
          yd[i] = fwd(ad[i], bd[detail::mapped_index<T>(bs, n, c, h, w)]);

  auto ai = a.impl();
  auto bi = b.impl();
  detail::attach<T>(y, {ai, bi}, [ai, bi, s, bs, dfda, dfdb](typename Tensor<T>::Impl& self) {
    if (ai->requires_grad) ai->ensure_grad();
    if (bi->requires_grad) bi->ensure_grad();
    std::size_t i = 0;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int h = 0; h < s.h; ++h)
          for (int w = 0; w < s.w; ++w, ++i) {
            std::size_t j = detail::mapped_index<T>(bs, n, c, h, w);
            const T g = self.grad[i];
            const T av = ai->data[i];
            const T bv = bi->data[j];
            if (ai->requires_grad) ai->grad[i] += g * dfda(av, bv);
            if (bi->requires_grad) bi->grad[j] += g * dfdb(av, bv);
          }
  });
  return y;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

// a / (b + eps); the guarded division used by the alignment score.
template <class T>
Tensor<T> div_eps(const Tensor<T>& a, const Tensor<T>& b, T eps) {
  return binary_broadcast(
      a, b, "div_eps", [eps](T x, T y) { return x / (y + eps); },
      [eps](T, T y) { return T(1) / (y + eps); },
      [eps](T x, T y) { T d = y + eps; return -x / (d * d); });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary operations.
// ---------------------------------------------------------------------------

template <class T, class Fwd, class Dfdx>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Dfdx dfdx) {
  Tensor<T> y(x.shape());
  const auto& xd = x.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = fwd(xd[i]);
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, dfdx](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xi->grad[i] += self.grad[i] * dfdx(xi->data[i], self.data[i]);
  });
  return y;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  // Branch on sign for numerical stability at large |x|.
  auto fwd = [](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    T e = std::exp(v);
    return e / (T(1) + e);
  };
  return unary_op(x, fwd, [](T, T yv) { return yv * (T(1) - yv); });
}

template <class T>
Tensor<T> log_t(const Tensor<T>& x) {
  return unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary_op(
      x, [lo, hi](T v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, T k) {
  return unary_op(x, [k](T v) { return v * k; }, [k](T, T) { return k; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T k) {
  return unary_op(x, [k](T v) { return v + k; }, [](T, T) { return T(1); });
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

// Mean over (h, w) per (n, c): output (n, c, 1, 1).
template <class T>
Tensor<T> gap(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({s.n, s.c, 1, 1});
  const T inv = T(1) / (T(s.h) * T(s.w));
  const auto& xd = x.data();
  auto& yd = y.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T acc = T(0);
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.h * s.w;
      for (std::size_t i = 0; i < static_cast<std::size_t>(s.h) * s.w; ++i) acc += xd[base + i];
      yd[static_cast<std::size_t>(n) * s.c + c] = acc * inv;
    }
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, s, inv](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T g = self.grad[static_cast<std::size_t>(n) * s.c + c] * inv;
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.h * s.w;
        for (std::size_t i = 0; i < static_cast<std::size_t>(s.h) * s.w; ++i) xi->grad[base + i] += g;
      }
  });
  return y;
}

// Mean over w: output (n, c, h, 1).
template <class T>
Tensor<T> xpool(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({s.n, s.c, s.h, 1});
  const T inv = T(1) / T(s.w);
  const auto& xd = x.data();
  auto& yd = y.data();
  std::size_t rows = static_cast<std::size_t>(s.n) * s.c * s.h;
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (int w = 0; w < s.w; ++w) acc += xd[r * s.w + w];
    yd[r] = acc * inv;
  }
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, s, inv, rows](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = self.grad[r] * inv;
      for (int w = 0; w < s.w; ++w) xi->grad[r * s.w + w] += g;
    }
  });
  return y;
}

// Mean over h: output (n, c, 1, w).
template <class T>
Tensor<T> ypool(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({s.n, s.c, 1, s.w});
  const T inv = T(1) / T(s.h);
  const auto& xd = x.data();
  auto& yd = y.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int w = 0; w < s.w; ++w) {
        T acc = T(0);
        for (int h = 0; h < s.h; ++h) acc += xd[x.index(n, c, h, w)];
        yd[y.index(n, c, 0, w)] = acc * inv;
      }
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, s, inv](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    const Shape ys{s.n, s.c, 1, s.w};
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int w = 0; w < s.w; ++w) {
          const T g = self.grad[((static_cast<std::size_t>(n) * s.c + c) * 1 + 0) * s.w + w] * inv;
          for (int h = 0; h < s.h; ++h)
            xi->grad[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w] += g;
        }
  });
  return y;
}

// Sum over the slice axis: output (1, c, h, w).
template <class T>
Tensor<T> slice_sum(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({1, s.c, s.h, s.w});
  const std::size_t plane = static_cast<std::size_t>(s.c) * s.h * s.w;
  const auto& xd = x.data();
  auto& yd = y.data();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) yd[i] += xd[n * plane + i];
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, s, plane](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < plane; ++i) xi->grad[n * plane + i] += self.grad[i];
  });
  return y;
}

// Max over the slice axis: output (1, c, h, w). Gradient routes to the first
// slice attaining the maximum.
template <class T>
Tensor<T> slice_max(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({1, s.c, s.h, s.w});
  const std::size_t plane = static_cast<std::size_t>(s.c) * s.h * s.w;
  auto argmax = std::make_shared<std::vector<int>>(plane, 0);
  const auto& xd = x.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < plane; ++i) {
    T best = xd[i];
    int bn = 0;
    for (int n = 1; n < s.n; ++n) {
      T v = xd[n * plane + i];
      if (v > best) {
        best = v;
        bn = n;
      }
    }
    yd[i] = best;
    (*argmax)[i] = bn;
  }
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, plane, argmax](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t i = 0; i < plane; ++i)
      xi->grad[static_cast<std::size_t>((*argmax)[i]) * plane + i] += self.grad[i];
  });
  return y;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  Tensor<T> y({1, 1, 1, 1});
  T acc = T(0);
  for (T v : x.data()) acc += v;
  y.data()[0] = acc;
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    const T g = self.grad[0];
    for (auto& gv : xi->grad) gv += g;
  });
  return y;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return mul_scalar(sum_all(x), T(1) / T(x.size()));
}

// ---------------------------------------------------------------------------
// Softmax across the slice axis of an (n,1,1,1) score tensor.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax_slices(const Tensor<T>& x) {
  const Shape s = x.shape();
  require_shape(s.c == 1 && s.h == 1 && s.w == 1,
                "softmax_slices expects (n,1,1,1), got " + s.str());
  Tensor<T> y(s);
  const auto& xd = x.data();
  auto& yd = y.data();
  T mx = xd[0];
  for (T v : xd) mx = std::max(mx, v);
  T denom = T(0);
  for (std::size_t i = 0; i < xd.size(); ++i) {
    yd[i] = std::exp(xd[i] - mx);
    denom += yd[i];
  }
  for (auto& v : yd) v /= denom;
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    T dot = T(0);
    for (std::size_t i = 0; i < self.data.size(); ++i) dot += self.grad[i] * self.data[i];
    for (std::size_t i = 0; i < self.data.size(); ++i)
      xi->grad[i] += self.data[i] * (self.grad[i] - dot);
  });
  return y;
}

// ---------------------------------------------------------------------------
// Shape surgery: concatenation, splitting, transposes, replication.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  require_shape(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
                "concat_channels: non-channel axes differ, " + sa.str() + " vs " + sb.str());
  Tensor<T> y({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.h * sa.w;
  const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.h * sb.w;
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.data().begin() + n * pa, pa, y.data().begin() + n * (pa + pb));
    std::copy_n(b.data().begin() + n * pb, pb, y.data().begin() + n * (pa + pb) + pa);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  detail::attach<T>(y, {ai, bi}, [ai, bi, sa, pa, pb](typename Tensor<T>::Impl& self) {
    for (int n = 0; n < sa.n; ++n) {
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < pa; ++i) ai->grad[n * pa + i] += self.grad[n * (pa + pb) + i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < pb; ++i) bi->grad[n * pb + i] += self.grad[n * (pa + pb) + pa + i];
      }
    }
  });
  return y;
}

// Splits the channel axis at `at`: returns ([0,at), [at,c)).
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int at) {
  const Shape s = x.shape();
  require_shape(at > 0 && at < s.c, "split_channels: invalid split index");
  Tensor<T> a({s.n, at, s.h, s.w});
  Tensor<T> b({s.n, s.c - at, s.h, s.w});
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t pa = at * hw, pb = (s.c - at) * hw;
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.data().begin() + n * (pa + pb), pa, a.data().begin() + n * pa);
    std::copy_n(x.data().begin() + n * (pa + pb) + pa, pb, b.data().begin() + n * pb);
  }
  auto xi = x.impl();
  detail::attach<T>(a, {xi}, [xi, s, pa, pb](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < pa; ++i) xi->grad[n * (pa + pb) + i] += self.grad[n * pa + i];
  });
  detail::attach<T>(b, {xi}, [xi, s, pa, pb](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < pb; ++i) xi->grad[n * (pa + pb) + pa + i] += self.grad[n * pb + i];
  });
  return {a, b};
}

// Concatenation along the height axis; used for the coordinate-attention
// joint encoding of (h,1) and transposed (w,1) tensors.
template <class T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  require_shape(sa.n == sb.n && sa.c == sb.c && sa.w == sb.w,
                "concat_rows: non-height axes differ, " + sa.str() + " vs " + sb.str());
  Tensor<T> y({sa.n, sa.c, sa.h + sb.h, sa.w});
  const std::size_t ra = static_cast<std::size_t>(sa.h) * sa.w;
  const std::size_t rb = static_cast<std::size_t>(sb.h) * sb.w;
  const std::size_t nc = static_cast<std::size_t>(sa.n) * sa.c;
  for (std::size_t k = 0; k < nc; ++k) {
    std::copy_n(a.data().begin() + k * ra, ra, y.data().begin() + k * (ra + rb));
    std::copy_n(b.data().begin() + k * rb, rb, y.data().begin() + k * (ra + rb) + ra);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  detail::attach<T>(y, {ai, bi}, [ai, bi, nc, ra, rb](typename Tensor<T>::Impl& self) {
    for (std::size_t k = 0; k < nc; ++k) {
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < ra; ++i) ai->grad[k * ra + i] += self.grad[k * (ra + rb) + i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < rb; ++i) bi->grad[k * rb + i] += self.grad[k * (ra + rb) + ra + i];
      }
    }
  });
  return y;
}

// Splits the height axis at `at`.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_rows(const Tensor<T>& x, int at) {
  const Shape s = x.shape();
  require_shape(at > 0 && at < s.h, "split_rows: invalid split index");
  Tensor<T> a({s.n, s.c, at, s.w});
  Tensor<T> b({s.n, s.c, s.h - at, s.w});
  const std::size_t ra = static_cast<std::size_t>(at) * s.w;
  const std::size_t rb = static_cast<std::size_t>(s.h - at) * s.w;
  const std::size_t nc = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t k = 0; k < nc; ++k) {
    std::copy_n(x.data().begin() + k * (ra + rb), ra, a.data().begin() + k * ra);
    std::copy_n(x.data().begin() + k * (ra + rb) + ra, rb, b.data().begin() + k * rb);
  }
  auto xi = x.impl();
  detail::attach<T>(a, {xi}, [xi, nc, ra, rb](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t k = 0; k < nc; ++k)
      for (std::size_t i = 0; i < ra; ++i) xi->grad[k * (ra + rb) + i] += self.grad[k * ra + i];
  });
  detail::attach<T>(b, {xi}, [xi, nc, ra, rb](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t k = 0; k < nc; ++k)
      for (std::size_t i = 0; i < rb; ++i) xi->grad[k * (ra + rb) + ra + i] += self.grad[k * rb + i];
  });
  return {a, b};
}

// Swaps the spatial axes: (n,c,h,w) -> (n,c,w,h).
template <class T>
Tensor<T> transpose_hw(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({s.n, s.c, s.w, s.h});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) y.at(n, c, w, h) = x.at(n, c, h, w);
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, s](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    const Shape ys{s.n, s.c, s.w, s.h};
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int h = 0; h < s.h; ++h)
          for (int w = 0; w < s.w; ++w)
            xi->grad[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w] +=
                self.grad[((static_cast<std::size_t>(n) * ys.c + c) * ys.h + w) * ys.w + h];
  });
  return y;
}

// Replicates a single-slice tensor n times along the slice axis.
template <class T>
Tensor<T> broadcast_slices(const Tensor<T>& x, int n) {
  const Shape s = x.shape();
  require_shape(s.n == 1, "broadcast_slices expects a single-slice tensor, got " + s.str());
  require_shape(n >= 1, "broadcast_slices: replica count must be >= 1");
  Tensor<T> y({n, s.c, s.h, s.w});
  const std::size_t plane = s.size();
  for (int i = 0; i < n; ++i)
    std::copy_n(x.data().begin(), plane, y.data().begin() + i * plane);
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, n, plane](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < plane; ++j) xi->grad[j] += self.grad[i * plane + j];
  });
  return y;
}

// Reinterprets the slice axis as channels: (n,c,h,w) -> (1, n*c, h, w).
// The memory layout is unchanged.
template <class T>
Tensor<T> merge_slices_to_channels(const Tensor<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y({1, s.n * s.c, s.h, s.w});
  y.data() = x.data();
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xi->grad[i] += self.grad[i];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Convolution and pooling.
// ---------------------------------------------------------------------------

namespace detail {

// Gathers conv patches of x[n] into a (c_in*k*k) x (h_out*w_out) matrix.
template <class T>
void im2col(const T* x, int c_in, int h, int w, int k, int stride, int pad, int h_out, int w_out,
            T* col) {
  const std::size_t cols = static_cast<std::size_t>(h_out) * w_out;
  for (int ci = 0; ci < c_in; ++ci) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + ((static_cast<std::size_t>(ci) * k + kh) * k + kw) * cols;
        std::size_t idx = 0;
        for (int ho = 0; ho < h_out; ++ho) {
          const int hi = ho * stride - pad + kh;
          for (int wo = 0; wo < w_out; ++wo, ++idx) {
            const int wi = wo * stride - pad + kw;
            row[idx] = (hi >= 0 && hi < h && wi >= 0 && wi < w)
                           ? x[(static_cast<std::size_t>(ci) * h + hi) * w + wi]
                           : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a (c_in*k*k) x (h_out*w_out) column matrix back into grad_x[n].
template <class T>
void col2im_add(const T* col, int c_in, int h, int w, int k, int stride, int pad, int h_out,
                int w_out, T* gx) {
  const std::size_t cols = static_cast<std::size_t>(h_out) * w_out;
  for (int ci = 0; ci < c_in; ++ci) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + ((static_cast<std::size_t>(ci) * k + kh) * k + kw) * cols;
        std::size_t idx = 0;
        for (int ho = 0; ho < h_out; ++ho) {
          const int hi = ho * stride - pad + kh;
          for (int wo = 0; wo < w_out; ++wo, ++idx) {
            const int wi = wo * stride - pad + kw;
            if (hi >= 0 && hi < h && wi >= 0 && wi < w)
              gx[(static_cast<std::size_t>(ci) * h + hi) * w + wi] += row[idx];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2D convolution with zero padding. weight: (c_out, c_in, k, k);
// bias: (1, c_out, 1, 1).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride = 1,
                 int padding = 0) {
  const Shape xs = x.shape(), ws = weight.shape(), bs = bias.shape();
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  require_shape(ws.h == ws.w, "conv2d: kernel must be square, got " + ws.str());
  require_shape(xs.c == ws.c, "conv2d: input channels " + xs.str() + " do not match weight " + ws.str());
  require_shape(bs.n == 1 && bs.c == ws.n && bs.h == 1 && bs.w == 1,
                "conv2d: bias " + bs.str() + " must be (1," + std::to_string(ws.n) + ",1,1)");
  const int k = ws.h;
  const int h_out = (xs.h + 2 * padding - k) / stride + 1;
  const int w_out = (xs.w + 2 * padding - k) / stride + 1;
  require_shape(h_out >= 1 && w_out >= 1,
                "conv2d: kernel " + ws.str() + " does not fit input " + xs.str());

  Tensor<T> y({xs.n, ws.n, h_out, w_out});
  const int c_out = ws.n;
  const std::size_t krows = static_cast<std::size_t>(xs.c) * k * k;
  const std::size_t ocols = static_cast<std::size_t>(h_out) * w_out;
  const std::size_t in_plane = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t out_plane = static_cast<std::size_t>(c_out) * ocols;

  using Mat = detail::RowMat<T>;
  Eigen::Map<const Mat> wmat(weight.data().data(), c_out, krows);

#pragma omp parallel
  {
    std::vector<T> col(krows * ocols);
#pragma omp for
    for (int n = 0; n < xs.n; ++n) {
      detail::im2col(x.data().data() + n * in_plane, xs.c, xs.h, xs.w, k, stride, padding, h_out,
                     w_out, col.data());
      Eigen::Map<const Mat> cmat(col.data(), krows, ocols);
      Eigen::Map<Mat> omat(y.data().data() + n * out_plane, c_out, ocols);
      omat.noalias() = wmat * cmat;
      for (int co = 0; co < c_out; ++co) omat.row(co).array() += bias.data()[co];
    }
  }

  auto xi = x.impl();
  auto wi = weight.impl();
  auto bi = bias.impl();
  detail::attach<T>(y, {xi, wi, bi},
                    [xi, wi, bi, xs, ws, stride, padding, k, h_out, w_out, c_out, krows, ocols,
                     in_plane, out_plane](typename Tensor<T>::Impl& self) {
    using Mat = detail::RowMat<T>;
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < c_out; ++co) {
          T acc = T(0);
          const T* g = self.grad.data() + n * out_plane + co * ocols;
          for (std::size_t i = 0; i < ocols; ++i) acc += g[i];
          bi->grad[co] += acc;
        }
    }
    if (wi->requires_grad) {
      wi->ensure_grad();
      // Per-slice weight gradients accumulated in slice order so the result
      // is independent of thread count.
      std::vector<std::vector<T>> gw(xs.n);
#pragma omp parallel
      {
        std::vector<T> col(krows * ocols);
#pragma omp for
        for (int n = 0; n < xs.n; ++n) {
          gw[n].assign(static_cast<std::size_t>(c_out) * krows, T(0));
          detail::im2col(xi->data.data() + n * in_plane, xs.c, xs.h, xs.w, k, stride, padding,
                         h_out, w_out, col.data());
          Eigen::Map<const Mat> cmat(col.data(), krows, ocols);
          Eigen::Map<const Mat> gmat(self.grad.data() + n * out_plane, c_out, ocols);
          Eigen::Map<Mat> gwm(gw[n].data(), c_out, krows);
          gwm.noalias() = gmat * cmat.transpose();
        }
      }
      for (int n = 0; n < xs.n; ++n)
        for (std::size_t i = 0; i < wi->grad.size(); ++i) wi->grad[i] += gw[n][i];
    }
    if (xi->requires_grad) {
      xi->ensure_grad();
      Eigen::Map<const Mat> wmat(wi->data.data(), c_out, krows);
#pragma omp parallel
      {
        std::vector<T> gcol(krows * ocols);
#pragma omp for
        for (int n = 0; n < xs.n; ++n) {
          Eigen::Map<const Mat> gmat(self.grad.data() + n * out_plane, c_out, ocols);
          Eigen::Map<Mat> gcm(gcol.data(), krows, ocols);
          gcm.noalias() = wmat.transpose() * gmat;
          detail::col2im_add(gcol.data(), xs.c, xs.h, xs.w, k, stride, padding, h_out, w_out,
                             xi->grad.data() + n * in_plane);
        }
      }
    }
  });
  return y;
}

// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
template <class T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const int h_out = s.h / 2, w_out = s.w / 2;
  require_shape(h_out >= 1 && w_out >= 1, "max_pool2: input too small " + s.str());
  Tensor<T> y({s.n, s.c, h_out, w_out});
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  const auto& xd = x.data();
  auto& yd = y.data();
  std::size_t oi = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int ho = 0; ho < h_out; ++ho)
        for (int wo = 0; wo < w_out; ++wo, ++oi) {
          std::size_t best_idx = x.index(n, c, ho * 2, wo * 2);
          T best = xd[best_idx];
          for (int dh = 0; dh < 2; ++dh)
            for (int dw = 0; dw < 2; ++dw) {
              std::size_t idx = x.index(n, c, ho * 2 + dh, wo * 2 + dw);
              if (xd[idx] > best) {
                best = xd[idx];
                best_idx = idx;
              }
            }
          yd[oi] = best;
          (*argmax)[oi] = best_idx;
        }
  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, argmax](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xi->grad[(*argmax)[i]] += self.grad[i];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Batch normalization.
// ---------------------------------------------------------------------------

template <class T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormStats(int channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Per-channel normalization over (n, h, w). gamma/beta: (1, c, 1, 1).
// Train mode uses batch statistics and updates running stats by momentum;
// eval mode uses the running stats.
template <class T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    BatchNormStats<T>& stats, Phase phase, T eps = T(1e-5),
                    T momentum = T(0.1)) {
  if (eps <= T(0)) throw ConfigError("batchnorm: eps must be positive");
  const Shape s = x.shape();
  require_shape(gamma.shape().c == s.c && beta.shape().c == s.c,
                "batchnorm: gamma/beta channels must match input " + s.str());
  require_shape(static_cast<int>(stats.running_mean.size()) == s.c,
                "batchnorm: running stats sized for " + std::to_string(stats.running_mean.size()) +
                    " channels, input has " + std::to_string(s.c));

  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  const T m_count = T(s.n) * T(hw);

  auto mean = std::make_shared<std::vector<T>>(s.c, T(0));
  auto var = std::make_shared<std::vector<T>>(s.c, T(0));
  if (phase == Phase::train) {
    for (int c = 0; c < s.c; ++c) {
      T acc = T(0);
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      (*mean)[c] = acc / m_count;
      T vacc = T(0);
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          T d = p[i] - (*mean)[c];
          vacc += d * d;
        }
      }
      (*var)[c] = vacc / m_count;
      stats.running_mean[c] = (T(1) - momentum) * stats.running_mean[c] + momentum * (*mean)[c];
      stats.running_var[c] = (T(1) - momentum) * stats.running_var[c] + momentum * (*var)[c];
    }
  } else {
    *mean = stats.running_mean;
    *var = stats.running_var;
  }

  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T inv_std = T(1) / std::sqrt((*var)[c] + eps);
      const T g = gamma.data()[c], b = beta.data()[c], mu = (*mean)[c];
      const T* p = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
      T* q = y.data().data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] = (p[i] - mu) * inv_std * g + b;
    }

  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  const bool train = phase == Phase::train;
  detail::attach<T>(y, {xi, gi, bi},
                    [xi, gi, bi, s, hw, m_count, mean, var, eps, train](typename Tensor<T>::Impl& self) {
    for (int c = 0; c < s.c; ++c) {
      const T mu = (*mean)[c];
      const T inv_std = T(1) / std::sqrt((*var)[c] + eps);
      const T g = gi->data[c];

      // Channel-level reductions shared by all gradient terms.
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T dy = self.grad[base + i];
          sum_dy += dy;
          sum_dy_xhat += dy * (xi->data[base + i] - mu) * inv_std;
        }
      }
      if (gi->requires_grad) {
        gi->ensure_grad();
        gi->grad[c] += sum_dy_xhat;
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        bi->grad[c] += sum_dy;
      }
      if (xi->requires_grad) {
        xi->ensure_grad();
        for (int n = 0; n < s.n; ++n) {
          const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const T dy = self.grad[base + i];
            if (train) {
              const T xhat = (xi->data[base + i] - mu) * inv_std;
              xi->grad[base + i] +=
                  g * inv_std * (dy - sum_dy / m_count - xhat * sum_dy_xhat / m_count);
            } else {
              xi->grad[base + i] += g * inv_std * dy;
            }
          }
        }
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Bilinear resize (align-corners convention: output corners map exactly onto
// input corners; identity when the size is unchanged).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: output size must be >= 1");
  const Shape s = x.shape();
  if (out_h == s.h && out_w == s.w) {
    // Identity resize is exact.
    Tensor<T> y(s);
    y.data() = x.data();
    auto xi = x.impl();
    detail::attach<T>(y, {xi}, [xi](typename Tensor<T>::Impl& self) {
      xi->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xi->grad[i] += self.grad[i];
    });
    return y;
  }

  Tensor<T> y({s.n, s.c, out_h, out_w});
  const T sh = out_h > 1 ? T(s.h - 1) / T(out_h - 1) : T(0);
  const T sw = out_w > 1 ? T(s.w - 1) / T(out_w - 1) : T(0);

  struct Tap {
    int h0, h1, w0, w1;
    T wh, ww;  // fractional weights toward h1 / w1
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(out_h) * out_w);
  for (int ho = 0; ho < out_h; ++ho) {
    T fh = sh * ho;
    int h0 = std::min(static_cast<int>(fh), s.h - 1);
    int h1 = std::min(h0 + 1, s.h - 1);
    for (int wo = 0; wo < out_w; ++wo) {
      T fw = sw * wo;
      int w0 = std::min(static_cast<int>(fw), s.w - 1);
      int w1 = std::min(w0 + 1, s.w - 1);
      (*taps)[static_cast<std::size_t>(ho) * out_w + wo] = {h0, h1, w0, w1, fh - h0, fw - w0};
    }
  }

  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.data().data() + (static_cast<std::size_t>(n) * s.c + c) * s.h * s.w;
      T* q = y.data().data() + (static_cast<std::size_t>(n) * s.c + c) * out_h * out_w;
      for (std::size_t i = 0; i < taps->size(); ++i) {
        const Tap& t = (*taps)[i];
        const T a = p[t.h0 * s.w + t.w0], b = p[t.h0 * s.w + t.w1];
        const T cc = p[t.h1 * s.w + t.w0], d = p[t.h1 * s.w + t.w1];
        q[i] = (T(1) - t.wh) * ((T(1) - t.ww) * a + t.ww * b) + t.wh * ((T(1) - t.ww) * cc + t.ww * d);
      }
    }

  auto xi = x.impl();
  detail::attach<T>(y, {xi}, [xi, s, out_h, out_w, taps](typename Tensor<T>::Impl& self) {
    xi->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        T* gp = xi->grad.data() + (static_cast<std::size_t>(n) * s.c + c) * s.h * s.w;
        const T* gq = self.grad.data() + (static_cast<std::size_t>(n) * s.c + c) * out_h * out_w;
        for (std::size_t i = 0; i < taps->size(); ++i) {
          const Tap& t = (*taps)[i];
          const T g = gq[i];
          gp[t.h0 * s.w + t.w0] += g * (T(1) - t.wh) * (T(1) - t.ww);
          gp[t.h0 * s.w + t.w1] += g * (T(1) - t.wh) * t.ww;
          gp[t.h1 * s.w + t.w0] += g * t.wh * (T(1) - t.ww);
          gp[t.h1 * s.w + t.w1] += g * t.wh * t.ww;
        }
      }
  });
  return y;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gfrnet
