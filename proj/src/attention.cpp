#include "motioncode/attention.hpp"

#include <cmath>

#include "motioncode/errors.hpp"
#include "motioncode/ops.hpp"

namespace motioncode {

void AttentionConfig::validate() const {
  if (n_layers < 1) throw ValidationError("attention: n_layers must be >= 1");
  if (window < 1) throw ValidationError("attention: window must be >= 1");
  if (model_dim < 1 || n_heads < 1 || model_dim % n_heads != 0) {
    throw ValidationError("attention: model_dim must be a positive multiple of n_heads");
  }
  if (ffn_dim < 1) throw ValidationError("attention: ffn_dim must be >= 1");
  if (io_dim < 1) throw ValidationError("attention: io_dim must be >= 1");
}

BandMatrix::BandMatrix(std::size_t n, std::size_t width) : n_(n), width_(width), data_(n * width, 0.0) {
  if (width == 0) throw InvalidArgument("band width must be >= 1");
}

double BandMatrix::operator()(std::size_t row, std::size_t col) const {
  if (col > row || row - col >= width_) return 0.0;
  return data_[row * width_ + (width_ - 1 - (row - col))];
}

FrameMatrix BandMatrix::dense() const {
  FrameMatrix out = FrameMatrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
  for (std::size_t t = 0; t < n_; ++t) {
    for (std::size_t m = 0; m < width_; ++m) {
      if (valid_slot(t, m)) out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(slot_column(t, m))) = slot(t, m);
    }
  }
  return out;
}

std::vector<double> relative_position_table(std::size_t window, std::size_t model_dim) {
  std::vector<double> table(window * model_dim);
  for (std::size_t m = 0; m < window; ++m) {
    const double offset = static_cast<double>(window - 1 - m);
    for (std::size_t i = 0; i < model_dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(model_dim));
      table[m * model_dim + i] = std::sin(offset * freq);
      if (i + 1 < model_dim) table[m * model_dim + i + 1] = std::cos(offset * freq);
    }
  }
  return table;
}

namespace {

template <typename T>
Tensor<T> glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<T> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from({fan_in, fan_out}, std::move(v), true);
}

template <typename T>
Tensor<T> filled(std::size_t n, T value) {
  return Tensor<T>::from({n}, std::vector<T>(n, value), true);
}

template <typename T>
Tensor<T> zero_matrix(std::size_t rows, std::size_t cols) {
  return Tensor<T>::zeros({rows, cols}, true);
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return ops::add_broadcast(tape, ops::matmul(tape, x, w), b);
}

}  // namespace

template <typename T>
LayerWeights<T> LayerWeights<T>::init(std::size_t d, std::size_t ffn, std::mt19937_64& rng) {
  LayerWeights w;
  w.q_w = glorot<T>(d, d, rng);
  w.k_w = glorot<T>(d, d, rng);
  w.v_w = glorot<T>(d, d, rng);
  w.o_w = glorot<T>(d, d, rng);
  w.ff1_w = glorot<T>(d, ffn, rng);
  w.ff2_w = glorot<T>(ffn, d, rng);
  w.q_b = filled<T>(d, 0);
  w.k_b = filled<T>(d, 0);
  w.v_b = filled<T>(d, 0);
  w.o_b = filled<T>(d, 0);
  w.ff1_b = filled<T>(ffn, 0);
  w.ff2_b = filled<T>(d, 0);
  w.norm1_gain = filled<T>(d, 1);
  w.norm1_bias = filled<T>(d, 0);
  w.norm2_gain = filled<T>(d, 1);
  w.norm2_bias = filled<T>(d, 0);
  return w;
}

template <typename T>
LayerWeights<T> LayerWeights<T>::zeros(std::size_t d, std::size_t ffn) {
  LayerWeights w;
  w.q_w = zero_matrix<T>(d, d);
  w.k_w = zero_matrix<T>(d, d);
  w.v_w = zero_matrix<T>(d, d);
  w.o_w = zero_matrix<T>(d, d);
  w.ff1_w = zero_matrix<T>(d, ffn);
  w.ff2_w = zero_matrix<T>(ffn, d);
  w.q_b = filled<T>(d, 0);
  w.k_b = filled<T>(d, 0);
  w.v_b = filled<T>(d, 0);
  w.o_b = filled<T>(d, 0);
  w.ff1_b = filled<T>(ffn, 0);
  w.ff2_b = filled<T>(d, 0);
  w.norm1_gain = filled<T>(d, 1);
  w.norm1_bias = filled<T>(d, 0);
  w.norm2_gain = filled<T>(d, 1);
  w.norm2_bias = filled<T>(d, 0);
  return w;
}

template <typename T>
void LayerWeights<T>::collect(const std::string& p, std::vector<NamedTensor<T>>& out) const {
  out.push_back({p + ".q.weight", q_w});
  out.push_back({p + ".q.bias", q_b});
  out.push_back({p + ".k.weight", k_w});
  out.push_back({p + ".k.bias", k_b});
  out.push_back({p + ".v.weight", v_w});
  out.push_back({p + ".v.bias", v_b});
  out.push_back({p + ".o.weight", o_w});
  out.push_back({p + ".o.bias", o_b});
  out.push_back({p + ".ff1.weight", ff1_w});
  out.push_back({p + ".ff1.bias", ff1_b});
  out.push_back({p + ".ff2.weight", ff2_w});
  out.push_back({p + ".ff2.bias", ff2_b});
  out.push_back({p + ".norm1.gain", norm1_gain});
  out.push_back({p + ".norm1.bias", norm1_bias});
  out.push_back({p + ".norm2.gain", norm2_gain});
  out.push_back({p + ".norm2.bias", norm2_bias});
}

template <typename T>
Tensor<T> causal_attention_layer(Tape<T>& tape, const Tensor<T>& x, const LayerWeights<T>& w, std::size_t window,
                                 std::size_t heads, BandMatrix* weights_out, std::size_t layer_index) {
  if (x.rank() != 2) throw InvalidArgument("attention layer expects frames x features");
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  if (window == 0 || heads == 0 || d % heads != 0) throw InvalidArgument("attention layer: bad window or heads");

  const auto table = relative_position_table(window, d);
  auto positions = Tensor<T>::from({window, d}, std::vector<T>(table.begin(), table.end()));
  auto self_position = Tensor<T>::from({1, d}, std::vector<T>(table.end() - static_cast<std::ptrdiff_t>(d), table.end()));

  auto h = ops::layer_norm(tape, x, w.norm1_gain, w.norm1_bias);
  // Positions are relative to the value frame and enter queries and keys only.
  auto query = ops::add_broadcast(tape, linear(tape, h, w.q_w, w.q_b), ops::matmul(tape, self_position, w.q_w));
  auto key = linear(tape, h, w.k_w, w.k_b);
  auto value = linear(tape, h, w.v_w, w.v_b);

  auto key_windows = ops::rearrange_windows(tape, key, window);
  auto keys = ops::add_broadcast(tape, key_windows.values, ops::matmul(tape, positions, w.k_w));
  auto values = ops::rearrange_windows(tape, value, window).values;

  std::vector<std::uint8_t> mask(n * heads * window);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t hh = 0; hh < heads; ++hh) {
      std::copy_n(key_windows.padded.begin() + static_cast<std::ptrdiff_t>(t * window), window,
                  mask.begin() + static_cast<std::ptrdiff_t>((t * heads + hh) * window));
    }
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(d / heads));
  auto scores = ops::window_scores(tape, query, keys, heads, scale);
  auto probs = ops::softmax_rows(tape, scores, mask);
  auto mixed = ops::window_mix(tape, probs, values);
  auto attended = ops::add(tape, x, linear(tape, mixed, w.o_w, w.o_b));

  auto h2 = ops::layer_norm(tape, attended, w.norm2_gain, w.norm2_bias);
  auto ff = linear(tape, ops::relu(tape, linear(tape, h2, w.ff1_w, w.ff1_b)), w.ff2_w, w.ff2_b);
  auto out = ops::add(tape, attended, ff);

  for (T v : out.values()) {
    if (!std::isfinite(v)) {
      throw NumericalError("non-finite activation in attention layer " + std::to_string(layer_index));
    }
  }

  if (weights_out) {
    *weights_out = BandMatrix(n, window);
    auto p = probs.values();
    const double inv_heads = 1.0 / static_cast<double>(heads);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t m = 0; m < window; ++m) {
        double acc = 0.0;
        for (std::size_t hh = 0; hh < heads; ++hh) acc += static_cast<double>(p[(t * heads + hh) * window + m]);
        weights_out->slot(t, m) = acc * inv_heads;
      }
    }
  }
  return out;
}

template <typename T>
CausalStack<T>::CausalStack(std::vector<LayerWeights<T>> layers, std::size_t window, std::size_t heads)
    : layers_(std::move(layers)), window_(window), heads_(heads) {}

template <typename T>
Tensor<T> CausalStack<T>::forward(Tape<T>& tape, const Tensor<T>& x, AttentionStack* trace) const {
  if (trace) trace->layers.assign(layers_.size(), BandMatrix{});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = causal_attention_layer(tape, h, layers_[i], window_, heads_, trace ? &trace->layers[i] : nullptr, i);
  }
  return h;
}

template <typename T>
void CausalStack<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + ".layer" + std::to_string(i), out);
}

template <typename T>
Encoder<T> Encoder<T>::init(const AttentionConfig& config, std::mt19937_64& rng) {
  config.validate();
  Encoder e;
  e.config_ = config;
  e.in_weight = glorot<T>(config.io_dim, config.model_dim, rng);
  e.in_bias = filled<T>(config.model_dim, 0);
  std::vector<LayerWeights<T>> layers;
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    layers.push_back(LayerWeights<T>::init(config.model_dim, config.ffn_dim, rng));
  }
  e.stack = CausalStack<T>(std::move(layers), config.window, config.n_heads);
  return e;
}

template <typename T>
Encoder<T> Encoder<T>::zeros(const AttentionConfig& config) {
  config.validate();
  Encoder e;
  e.config_ = config;
  e.in_weight = zero_matrix<T>(config.io_dim, config.model_dim);
  e.in_bias = filled<T>(config.model_dim, 0);
  std::vector<LayerWeights<T>> layers;
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    layers.push_back(LayerWeights<T>::zeros(config.model_dim, config.ffn_dim));
  }
  e.stack = CausalStack<T>(std::move(layers), config.window, config.n_heads);
  return e;
}

template <typename T>
Tensor<T> Encoder<T>::forward(Tape<T>& tape, const Tensor<T>& frames) const {
  if (frames.rank() != 2 || frames.dim(1) != config_.io_dim) {
    throw InvalidArgument("encoder expects frames x " + std::to_string(config_.io_dim) + ", got " +
                          shape_string(frames.dims()));
  }
  return stack.forward(tape, linear(tape, frames, in_weight, in_bias));
}

template <typename T>
void Encoder<T>::collect(std::vector<NamedTensor<T>>& out) const {
  out.push_back({"in_proj.weight", in_weight});
  out.push_back({"in_proj.bias", in_bias});
  stack.collect("enc", out);
}

template <typename T>
Decoder<T> Decoder<T>::init(const AttentionConfig& config, std::mt19937_64& rng) {
  config.validate();
  Decoder dec;
  dec.config_ = config;
  std::vector<LayerWeights<T>> layers;
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    layers.push_back(LayerWeights<T>::init(config.model_dim, config.ffn_dim, rng));
  }
  dec.stack = CausalStack<T>(std::move(layers), config.window, config.n_heads);
  dec.out_weight = glorot<T>(config.model_dim, config.io_dim, rng);
  dec.out_bias = filled<T>(config.io_dim, 0);
  return dec;
}

template <typename T>
Tensor<T> Decoder<T>::forward(Tape<T>& tape, const Tensor<T>& latents, AttentionStack* trace) const {
  if (latents.rank() != 2 || latents.dim(1) != config_.model_dim) {
    throw InvalidArgument("decoder expects frames x " + std::to_string(config_.model_dim) + ", got " +
                          shape_string(latents.dims()));
  }
  for (T v : latents.values()) {
    if (!std::isfinite(v)) throw NumericalError("decoder received non-finite latents");
  }
  return linear(tape, stack.forward(tape, latents, trace), out_weight, out_bias);
}

template <typename T>
void Decoder<T>::collect(std::vector<NamedTensor<T>>& out) const {
  stack.collect("dec", out);
  out.push_back({"out_proj.weight", out_weight});
  out.push_back({"out_proj.bias", out_bias});
}

#define MOTIONCODE_INSTANTIATE_ATTENTION(T)                                                                  \
  template struct LayerWeights<T>;                                                                          \
  template class CausalStack<T>;                                                                            \
  template class Encoder<T>;                                                                                \
  template class Decoder<T>;                                                                                \
  template Tensor<T> causal_attention_layer(Tape<T>&, const Tensor<T>&, const LayerWeights<T>&, std::size_t, \
                                            std::size_t, BandMatrix*, std::size_t);

MOTIONCODE_INSTANTIATE_ATTENTION(float)
MOTIONCODE_INSTANTIATE_ATTENTION(double)

#undef MOTIONCODE_INSTANTIATE_ATTENTION

}  // namespace motioncode
