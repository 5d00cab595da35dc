#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "motioncode/dataio.hpp"
#include "motioncode/tensor.hpp"

namespace motioncode {

struct AttentionConfig {
  std::size_t n_layers = 6;
  std::size_t window = 100;
  std::size_t model_dim = 256;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 1024;
  std::size_t io_dim = 14;

  void validate() const;
  /// Frames of lookback of the whole stack: n_layers * (window - 1).
  std::size_t lookback() const { return n_layers * (window - 1); }
};

/// Lower-triangular band matrix: row t is stored for columns
/// [t - width + 1, t]; entries outside the band (and before column 0) are 0.
class BandMatrix {
 public:
  BandMatrix() = default;
  BandMatrix(std::size_t n, std::size_t width);

  std::size_t size() const { return n_; }
  std::size_t width() const { return width_; }

  /// Entry (row, col); zero outside the band.
  double operator()(std::size_t row, std::size_t col) const;
  /// Band slot m of row t, i.e. column t - width + 1 + m.
  double& slot(std::size_t row, std::size_t m) { return data_[row * width_ + m]; }
  double slot(std::size_t row, std::size_t m) const { return data_[row * width_ + m]; }
  /// False for slots that fall before column 0.
  bool valid_slot(std::size_t row, std::size_t m) const { return row + m + 1 >= width_; }
  std::size_t slot_column(std::size_t row, std::size_t m) const { return row + m + 1 - width_; }

  FrameMatrix dense() const;

 private:
  std::size_t n_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// Per-layer attention weights of one pass through a causal stack, averaged
/// over heads.
struct AttentionStack {
  std::vector<BandMatrix> layers;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct LayerWeights {
  Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  Tensor<T> ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor<T> norm1_gain, norm1_bias, norm2_gain, norm2_bias;

  /// Glorot-uniform projections, zero biases, unit norm gains.
  static LayerWeights init(std::size_t model_dim, std::size_t ffn_dim, std::mt19937_64& rng);
  /// All projections zero, unit norm gains.
  static LayerWeights zeros(std::size_t model_dim, std::size_t ffn_dim);

  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;
};

/// Row m holds the sinusoidal encoding of relative offset window - 1 - m, so
/// the last row (the value frame itself) is offset 0.
std::vector<double> relative_position_table(std::size_t window, std::size_t model_dim);

/// One pre-norm causal self-attention block with a feed-forward sublayer.
/// Frame t attends to frames [t - window + 1, t]. If `weights_out` is set it
/// receives the head-averaged band weights.
template <typename T>
Tensor<T> causal_attention_layer(Tape<T>& tape, const Tensor<T>& x, const LayerWeights<T>& layer,
                                 std::size_t window, std::size_t heads, BandMatrix* weights_out = nullptr,
                                 std::size_t layer_index = 0);

template <typename T>
class CausalStack {
 public:
  CausalStack() = default;
  CausalStack(std::vector<LayerWeights<T>> layers, std::size_t window, std::size_t heads);

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, AttentionStack* trace = nullptr) const;

  std::size_t window() const { return window_; }
  std::vector<LayerWeights<T>>& layers() { return layers_; }
  const std::vector<LayerWeights<T>>& layers() const { return layers_; }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

 private:
  std::vector<LayerWeights<T>> layers_;
  std::size_t window_ = 1;
  std::size_t heads_ = 1;
};

/// Input projection n_j -> D followed by the encoder stack.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  static Encoder init(const AttentionConfig& config, std::mt19937_64& rng);
  static Encoder zeros(const AttentionConfig& config);

  /// frames[n_f x n_j] -> z_e[n_f x D].
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& frames) const;

  const AttentionConfig& config() const { return config_; }
  void collect(std::vector<NamedTensor<T>>& out) const;

  Tensor<T> in_weight, in_bias;
  CausalStack<T> stack;

 private:
  AttentionConfig config_;
};

/// Decoder stack followed by the output projection D -> n_j.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  static Decoder init(const AttentionConfig& config, std::mt19937_64& rng);

  /// latents[n_f x D] -> outputs[n_f x n_j]; per-layer weights go to `trace`.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& latents, AttentionStack* trace = nullptr) const;

  const AttentionConfig& config() const { return config_; }
  void collect(std::vector<NamedTensor<T>>& out) const;

  Tensor<T> out_weight, out_bias;
  CausalStack<T> stack;

 private:
  AttentionConfig config_;
};

}  // namespace motioncode
