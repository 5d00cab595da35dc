#include "motioncode/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace motioncode::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_string(a.dims()) + " vs " +
                          shape_string(b.dims()));
  }
}

std::size_t last_dim(const Shape& dims) { return dims.empty() ? 1 : dims.back(); }

template <typename T, typename F>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& a, F forward, auto derivative) {
  auto out = Tensor<T>::zeros(a.dims());
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = forward(av[i]);
  if (tape.needs_grad({&a})) {
    tape.record({a}, out, [a, out, derivative]() mutable {
      auto g = out.grad();
      auto x = a.values();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * derivative(x[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto out = Tensor<T>::zeros(a.dims());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto out = Tensor<T>::zeros(a.dims());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto out = Tensor<T>::zeros(a.dims());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, std::type_identity_t<T> factor) {
  return unary(tape, a, [factor](T x) { return x * factor; }, [factor](T) { return factor; });
}

template <typename T>
Tensor<T> add_broadcast(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  auto matches = [&a](const Shape& tail) {
    return tail.size() <= a.rank() && std::equal(tail.begin(), tail.end(), a.dims().end() - tail.size());
  };
  Shape trailing = b.dims();
  while (!matches(trailing) && !trailing.empty() && trailing.front() == 1) trailing.erase(trailing.begin());
  if (!matches(trailing)) {
    throw InvalidArgument("add_broadcast: " + shape_string(b.dims()) + " does not broadcast onto " +
                          shape_string(a.dims()));
  }
  const std::size_t block = b.size();
  auto out = Tensor<T>::zeros(a.dims());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t base = 0; base < ov.size(); base += block) {
    for (std::size_t j = 0; j < block; ++j) ov[base + j] = av[base + j] + bv[j];
  }
  if (tape.needs_grad({&a, &b})) {
    tape.record({a, b}, out, [a, b, out, block]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t base = 0; base < g.size(); base += block) {
          for (std::size_t j = 0; j < block; ++j) gb[j] += g[base + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a) {
  return unary(tape, a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& a) {
  return unary(tape, a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a) {
  return unary(
      tape, a, [](T x) { return std::abs(x); },
      [](T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.values()) total += v;
  auto out = Tensor<T>::scalar(total);
  if (tape.needs_grad({&a})) {
    tape.record({a}, out, [a, out]() mutable {
      const T g = out.grad()[0];
      for (auto& ga : a.mutable_grad()) ga += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a) {
  if (a.size() == 0) throw InvalidArgument("mean of an empty tensor");
  return scale(tape, sum(tape, a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 1 || b.rank() != 2 || last_dim(a.dims()) != b.dim(0)) {
    throw InvalidArgument("matmul: incompatible shapes " + shape_string(a.dims()) + " x " +
                          shape_string(b.dims()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.size() / k;
  Shape out_dims = a.dims();
  out_dims.back() = n;
  auto out = Tensor<T>::zeros(out_dims);
  ConstMap<T> am(a.values().data(), m, k);
  ConstMap<T> bm(b.values().data(), k, n);
  Map<T> om(out.mutable_values().data(), m, n);
  om.noalias() = am * bm;
  if (tape.needs_grad({&a, &b})) {
    tape.record({a, b}, out, [a, b, out, m, k, n]() mutable {
      ConstMap<T> g(out.grad().data(), m, n);
      if (a.requires_grad()) {
        Map<T> ga(a.mutable_grad().data(), m, k);
        ConstMap<T> bm(b.values().data(), k, n);
        ga.noalias() += g * bm.transpose();
      }
      if (b.requires_grad()) {
        Map<T> gb(b.mutable_grad().data(), k, n);
        ConstMap<T> am(a.values().data(), m, k);
        gb.noalias() += am.transpose() * g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     std::type_identity_t<T> eps) {
  const std::size_t width = last_dim(x.dims());
  if (gain.size() != width || bias.size() != width) {
    throw InvalidArgument("layer_norm: gain/bias width does not match " + shape_string(x.dims()));
  }
  const std::size_t rows = x.size() / width;
  auto out = Tensor<T>::zeros(x.dims());
  std::vector<T> normalized(x.size());
  std::vector<T> inv_std(rows);
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  auto ov = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * width;
    T mu = T(0);
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<T>(width);
    T var = T(0);
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(width);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const T h = (row[j] - mu) * is;
      normalized[r * width + j] = h;
      ov[r * width + j] = h * gv[j] + bv[j];
    }
  }
  if (tape.needs_grad({&x, &gain, &bias})) {
    tape.record({x, gain, bias}, out,
                [x, gain, bias, out, rows, width, normalized = std::move(normalized),
                 inv_std = std::move(inv_std)]() mutable {
                  auto g = out.grad();
                  auto gv = gain.values();
                  if (gain.requires_grad()) {
                    auto gg = gain.mutable_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * normalized[i];
                  }
                  if (bias.requires_grad()) {
                    auto gb = bias.mutable_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
                  }
                  if (x.requires_grad()) {
                    auto gx = x.mutable_grad();
                    const T inv_w = T(1) / static_cast<T>(width);
                    for (std::size_t r = 0; r < rows; ++r) {
                      T mean_dh = T(0);
                      T mean_dh_h = T(0);
                      for (std::size_t j = 0; j < width; ++j) {
                        const T dh = g[r * width + j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * normalized[r * width + j];
                      }
                      mean_dh *= inv_w;
                      mean_dh_h *= inv_w;
                      for (std::size_t j = 0; j < width; ++j) {
                        const T dh = g[r * width + j] * gv[j];
                        gx[r * width + j] +=
                            inv_std[r] * (dh - mean_dh - normalized[r * width + j] * mean_dh_h);
                      }
                    }
                  }
                });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != x.size()) {
    throw InvalidArgument("softmax_rows: mask has " + std::to_string(mask.size()) + " entries for tensor " +
                          shape_string(x.dims()));
  }
  const std::size_t width = last_dim(x.dims());
  const std::size_t rows = width == 0 ? 0 : x.size() / width;
  auto out = Tensor<T>::zeros(x.dims());
  auto xv = x.values();
  auto ov = out.mutable_values();
  auto masked = [&](std::size_t i) { return !mask.empty() && mask[i] != 0; };
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * width;
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < width; ++j) {
      if (!masked(base + j)) hi = std::max(hi, xv[base + j]);
    }
    if (hi == -std::numeric_limits<T>::infinity()) continue;  // fully masked
    T total = T(0);
    for (std::size_t j = 0; j < width; ++j) {
      if (masked(base + j)) continue;
      const T e = std::exp(xv[base + j] - hi);
      ov[base + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < width; ++j) ov[base + j] /= total;
  }
  if (tape.needs_grad({&x})) {
    tape.record({x}, out, [x, out, rows, width]() mutable {
      auto g = out.grad();
      auto y = out.values();
      auto gx = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * width;
        T dot = T(0);
        for (std::size_t j = 0; j < width; ++j) dot += y[base + j] * g[base + j];
        // Masked entries have y == 0 and therefore receive no gradient.
        for (std::size_t j = 0; j < width; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin > end || end > x.dim(0)) {
    throw InvalidArgument("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") out of bounds for " + shape_string(x.dims()));
  }
  const std::size_t stride = x.size() / std::max<std::size_t>(x.dim(0), 1);
  Shape dims = x.dims();
  dims[0] = end - begin;
  auto xv = x.values();
  std::vector<T> values(xv.begin() + begin * stride, xv.begin() + end * stride);
  auto out = Tensor<T>::from(dims, std::move(values));
  if (tape.needs_grad({&x})) {
    tape.record({x}, out, [x, out, begin, stride]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * stride + i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& table, std::span<const std::size_t> index) {
  if (table.rank() != 2) throw InvalidArgument("gather_rows: table must be rank 2");
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  auto out = Tensor<T>::zeros({index.size(), width});
  auto tv = table.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw InvalidArgument("gather_rows: index out of range");
    std::copy_n(tv.begin() + index[i] * width, width, ov.begin() + i * width);
  }
  if (tape.needs_grad({&table})) {
    tape.record({table}, out, [table, out, idx = std::vector<std::size_t>(index.begin(), index.end()),
                               width]() mutable {
      auto g = out.grad();
      auto gt = table.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) gt[idx[i] * width + j] += g[i * width + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> range_mean(Tape<T>& tape, const Tensor<T>& x, std::span<const RowRange> ranges) {
  if (x.rank() != 2) throw InvalidArgument("range_mean: expected a rank-2 tensor");
  const std::size_t n = x.dim(0);
  const std::size_t width = x.dim(1);
  std::size_t cursor = 0;
  for (const auto& r : ranges) {
    if (r.begin != cursor || r.end <= r.begin || r.end > n) {
      throw InvalidArgument("range_mean: ranges must partition the rows in order");
    }
    cursor = r.end;
  }
  if (cursor != n) throw InvalidArgument("range_mean: ranges must cover every row");

  auto out = Tensor<T>::zeros(x.dims());
  auto xv = x.values();
  auto ov = out.mutable_values();
  std::vector<T> acc(width);
  for (const auto& r : ranges) {
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t t = r.begin; t < r.end; ++t) {
      for (std::size_t j = 0; j < width; ++j) acc[j] += xv[t * width + j];
    }
    const T count = static_cast<T>(r.end - r.begin);
    for (std::size_t j = 0; j < width; ++j) acc[j] /= count;
    for (std::size_t t = r.begin; t < r.end; ++t) std::copy(acc.begin(), acc.end(), ov.begin() + t * width);
  }
  if (tape.needs_grad({&x})) {
    tape.record({x}, out, [x, out, width, rs = std::vector<RowRange>(ranges.begin(), ranges.end())]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      std::vector<T> acc(width);
      for (const auto& r : rs) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (std::size_t t = r.begin; t < r.end; ++t) {
          for (std::size_t j = 0; j < width; ++j) acc[j] += g[t * width + j];
        }
        const T inv = T(1) / static_cast<T>(r.end - r.begin);
        for (std::size_t t = r.begin; t < r.end; ++t) {
          for (std::size_t j = 0; j < width; ++j) gx[t * width + j] += acc[j] * inv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  auto xv = x.values();
  return Tensor<T>::from(x.dims(), std::vector<T>(xv.begin(), xv.end()));
}

template <typename T>
Windows<T> rearrange_windows(Tape<T>& tape, const Tensor<T>& x, std::size_t width) {
  if (x.rank() != 2) throw InvalidArgument("rearrange_windows: expected frames x features");
  if (width == 0) throw InvalidArgument("rearrange_windows: window must be >= 1");
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  Windows<T> w;
  w.width = width;
  w.values = Tensor<T>::zeros({n, width, d});
  w.padded.assign(n * width, 0);
  auto xv = x.values();
  auto ov = w.values.mutable_values();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t m = 0; m < width; ++m) {
      // source frame t - width + 1 + m, computed without unsigned underflow
      if (t + m + 1 < width) {
        w.padded[t * width + m] = 1;
        continue;
      }
      const std::size_t s = t + m + 1 - width;
      std::copy_n(xv.begin() + s * d, d, ov.begin() + (t * width + m) * d);
    }
  }
  if (tape.needs_grad({&x})) {
    tape.record({x}, w.values, [x, out = w.values, n, d, width]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t m = 0; m < width; ++m) {
          if (t + m + 1 < width) continue;
          const std::size_t s = t + m + 1 - width;
          const T* src = g.data() + (t * width + m) * d;
          T* dst = gx.data() + s * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return w;
}

template <typename T>
Tensor<T> window_scores(Tape<T>& tape, const Tensor<T>& query, const Tensor<T>& keys, std::size_t heads,
                        std::type_identity_t<T> scale_factor) {
  if (query.rank() != 2 || keys.rank() != 3 || keys.dim(0) != query.dim(0) || keys.dim(2) != query.dim(1)) {
    throw InvalidArgument("window_scores: incompatible shapes " + shape_string(query.dims()) + " and " +
                          shape_string(keys.dims()));
  }
  const std::size_t n = query.dim(0);
  const std::size_t d = query.dim(1);
  const std::size_t width = keys.dim(1);
  if (heads == 0 || d % heads != 0) throw InvalidArgument("window_scores: feature width not divisible by heads");
  const std::size_t hd = d / heads;
  auto out = Tensor<T>::zeros({n, heads, width});
  auto qv = query.values();
  auto kv = keys.values();
  auto ov = out.mutable_values();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* q = qv.data() + t * d + h * hd;
      for (std::size_t m = 0; m < width; ++m) {
        const T* k = kv.data() + (t * width + m) * d + h * hd;
        T acc = T(0);
        for (std::size_t j = 0; j < hd; ++j) acc += q[j] * k[j];
        ov[(t * heads + h) * width + m] = acc * scale_factor;
      }
    }
  }
  if (tape.needs_grad({&query, &keys})) {
    tape.record({query, keys}, out, [query, keys, out, n, d, width, heads, hd, scale_factor]() mutable {
      auto g = out.grad();
      auto qv = query.values();
      auto kv = keys.values();
      const bool want_q = query.requires_grad();
      const bool want_k = keys.requires_grad();
      T* gq = want_q ? query.mutable_grad().data() : nullptr;
      T* gk = want_k ? keys.mutable_grad().data() : nullptr;
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t m = 0; m < width; ++m) {
            const T s = g[(t * heads + h) * width + m] * scale_factor;
            if (s == T(0)) continue;
            const std::size_t qo = t * d + h * hd;
            const std::size_t ko = (t * width + m) * d + h * hd;
            for (std::size_t j = 0; j < hd; ++j) {
              if (want_q) gq[qo + j] += s * kv[ko + j];
              if (want_k) gk[ko + j] += s * qv[qo + j];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> window_mix(Tape<T>& tape, const Tensor<T>& weights, const Tensor<T>& values) {
  if (weights.rank() != 3 || values.rank() != 3 || weights.dim(0) != values.dim(0) ||
      weights.dim(2) != values.dim(1)) {
    throw InvalidArgument("window_mix: incompatible shapes " + shape_string(weights.dims()) + " and " +
                          shape_string(values.dims()));
  }
  const std::size_t n = values.dim(0);
  const std::size_t width = values.dim(1);
  const std::size_t d = values.dim(2);
  const std::size_t heads = weights.dim(1);
  if (heads == 0 || d % heads != 0) throw InvalidArgument("window_mix: feature width not divisible by heads");
  const std::size_t hd = d / heads;
  auto out = Tensor<T>::zeros({n, d});
  auto pv = weights.values();
  auto vv = values.values();
  auto ov = out.mutable_values();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* o = ov.data() + t * d + h * hd;
      for (std::size_t m = 0; m < width; ++m) {
        const T p = pv[(t * heads + h) * width + m];
        if (p == T(0)) continue;
        const T* v = vv.data() + (t * width + m) * d + h * hd;
        for (std::size_t j = 0; j < hd; ++j) o[j] += p * v[j];
      }
    }
  }
  if (tape.needs_grad({&weights, &values})) {
    tape.record({weights, values}, out, [weights, values, out, n, width, d, heads, hd]() mutable {
      auto g = out.grad();
      auto pv = weights.values();
      auto vv = values.values();
      const bool want_p = weights.requires_grad();
      const bool want_v = values.requires_grad();
      T* gp = want_p ? weights.mutable_grad().data() : nullptr;
      T* gv = want_v ? values.mutable_grad().data() : nullptr;
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t h = 0; h < heads; ++h) {
          const T* go = g.data() + t * d + h * hd;
          for (std::size_t m = 0; m < width; ++m) {
            const std::size_t pi = (t * heads + h) * width + m;
            const std::size_t vo = (t * width + m) * d + h * hd;
            if (want_p) {
              T acc = T(0);
              for (std::size_t j = 0; j < hd; ++j) acc += go[j] * vv[vo + j];
              gp[pi] += acc;
            }
            if (want_v) {
              const T p = pv[pi];
              for (std::size_t j = 0; j < hd; ++j) gv[vo + j] += p * go[j];
            }
          }
        }
      }
    });
  }
  return out;
}

#define MOTIONCODE_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, std::type_identity_t<T>);                       \
  template Tensor<T> add_broadcast(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> square(Tape<T>&, const Tensor<T>&);                                               \
  template Tensor<T> abs(Tape<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> layer_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                std::type_identity_t<T>);                                              \
  template Tensor<T> softmax_rows(Tape<T>&, const Tensor<T>&, std::span<const std::uint8_t>);          \
  template Tensor<T> slice_rows(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> gather_rows(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);            \
  template Tensor<T> range_mean(Tape<T>&, const Tensor<T>&, std::span<const RowRange>);                \
  template Tensor<T> detach(const Tensor<T>&);                                                         \
  template Windows<T> rearrange_windows(Tape<T>&, const Tensor<T>&, std::size_t);                      \
  template Tensor<T> window_scores(Tape<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,          \
                                   std::type_identity_t<T>);                                           \
  template Tensor<T> window_mix(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

MOTIONCODE_INSTANTIATE_OPS(float)
MOTIONCODE_INSTANTIATE_OPS(double)

#undef MOTIONCODE_INSTANTIATE_OPS

}  // namespace motioncode::ops
