#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "motioncode/tensor.hpp"

namespace motioncode::ops {

/// Half-open row interval [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Sliding causal windows over a frame sequence. Slot m of row t holds frame
/// t - M + 1 + m; slots that fall before frame 0 are zero and flagged.
template <typename T>
struct Windows {
  Tensor<T> values;                 // n_f x M x D
  std::vector<std::uint8_t> padded;  // n_f x M, 1 = padded slot
  std::size_t width = 0;
};

// Elementwise and broadcasting arithmetic.
template <typename T> Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, std::type_identity_t<T> factor);
/// a + b where b's extents (leading unit extents ignored) equal a's trailing extents.
template <typename T> Tensor<T> add_broadcast(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a);
template <typename T> Tensor<T> square(Tape<T>& tape, const Tensor<T>& a);
/// |a|, with subgradient 0 at 0.
template <typename T> Tensor<T> abs(Tape<T>& tape, const Tensor<T>& a);

// Reductions to a scalar.
template <typename T> Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);
template <typename T> Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a);

/// a[..., k] x b[k, n] -> [..., n]; leading extents of a are flattened.
template <typename T> Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Normalizes over the last axis, then applies per-feature gain and bias.
template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     std::type_identity_t<T> eps = T(1e-5));

/// Softmax over the last axis. `mask` flags entries to exclude (1 = masked);
/// it may be empty. Masked entries are exactly 0; fully masked rows are all 0.
template <typename T>
Tensor<T> softmax_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::uint8_t> mask);

/// Row slice [begin, end) along the first axis.
template <typename T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t end);

/// Row gather from a [K x D] table; gradients scatter-add back into the table.
template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& table, std::span<const std::size_t> index);

/// Replaces each row by the mean of its range. Ranges must partition the rows.
template <typename T>
Tensor<T> range_mean(Tape<T>& tape, const Tensor<T>& x, std::span<const RowRange> ranges);

/// Identity in the forward pass, zero derivative.
template <typename T> Tensor<T> detach(const Tensor<T>& x);

/// x[n_f x D] -> windows[n_f x M x D].
template <typename T> Windows<T> rearrange_windows(Tape<T>& tape, const Tensor<T>& x, std::size_t width);

/// Per-head scaled dot products between each frame's query and the keys of
/// its window: q[n x D], keys[n x M x D] -> scores[n x H x M].
template <typename T>
Tensor<T> window_scores(Tape<T>& tape, const Tensor<T>& query, const Tensor<T>& keys, std::size_t heads,
                        std::type_identity_t<T> scale_factor);

/// Per-head weighted sum of window values: weights[n x H x M], values[n x M x D] -> [n x D].
template <typename T>
Tensor<T> window_mix(Tape<T>& tape, const Tensor<T>& weights, const Tensor<T>& values);

}  // namespace motioncode::ops
