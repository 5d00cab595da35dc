#pragma once

#include <span>

#include "motioncode/tensor.hpp"

namespace motioncode {

struct LossWeights {
  double alpha = 1.0;  // reconstruction
  double beta = 0.25;  // commitment
  double gamma = 0.01; // total variation
  /// Route total-variation gradients to z_e as well as to the codebook.
  bool tv_straight_through = true;

  void validate() const;
};

/// Σ_t ‖v_i[t] − v̄_o[t]‖².
template <typename T>
Tensor<T> position_loss(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& mean_output);

/// Σ_{t≥1} ‖(v_i[t] − v_i[t−1]) − (v_o[t] − v_o[t−1])‖².
template <typename T>
Tensor<T> velocity_loss(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& output);

/// Σ_t ‖sg(z_q) − z_e‖² + β‖z_q − sg(z_e)‖².
template <typename T>
Tensor<T> vq_loss(Tape<T>& tape, const Tensor<T>& z_e, const Tensor<T>& z_q, double beta);

/// γ Σ_{t≥1} ‖z_q[t] − z_q[t−1]‖₁.
template <typename T>
Tensor<T> tv_loss(Tape<T>& tape, const Tensor<T>& z_q, double gamma);

/// Everything the loss needs from one sequence's forward pass.
template <typename T>
struct LossStreams {
  Tensor<T> input;        // v_i
  Tensor<T> output;       // v_o, decoded from z_q
  Tensor<T> mean_output;  // v̄_o, decoded from z̄_e
  Tensor<T> z_e;
  Tensor<T> z_q;          // codebook rows
  Tensor<T> z_tv;         // z_q, optionally with gradients also reaching z_e
};

/// Per-frame averages over the batch. `total` is the differentiable loss and
/// equals α(position + velocity) + vq + tv.
template <typename T>
struct LossReport {
  Tensor<T> total;
  double value = 0.0;
  double position = 0.0;
  double velocity = 0.0;
  double vq = 0.0;
  double tv = 0.0;
};

/// Each sequence's frame sums are divided by its frame count, then averaged
/// over the batch.
template <typename T>
LossReport<T> total_loss(Tape<T>& tape, std::span<const LossStreams<T>> batch, const LossWeights& weights);

}  // namespace motioncode
