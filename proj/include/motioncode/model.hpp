#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "motioncode/attention.hpp"
#include "motioncode/config_file.hpp"
#include "motioncode/losses.hpp"
#include "motioncode/quantizer.hpp"

namespace motioncode {

struct ModelConfig {
  std::size_t io_dim = 14;
  std::size_t model_dim = 256;
  std::size_t heads = 4;
  std::size_t ffn_dim = 1024;
  std::size_t encoder_layers = 6;
  std::size_t encoder_window = 100;
  std::size_t decoder_layers = 6;
  std::size_t decoder_window = 10;
  std::size_t codebook_size = 512;

  AttentionConfig encoder() const;
  AttentionConfig decoder() const;
  void validate() const;

  /// Reads the optional [model] section; io_dim comes from the data.
  static ModelConfig from_file(const KeyValueFile& file);
  void write(KeyValueFile& file) const;
};

template <typename T>
struct ForwardPass {
  Tensor<T> z_e;
  CodeAssignment<T> assignment;
  Tensor<T> output;       // decoded from z_q
  Tensor<T> mean_output;  // decoded from z̄_e
  Tensor<T> z_tv;

  LossStreams<T> streams(const Tensor<T>& input) const;
};

template <typename T>
class MotionCodeModel {
 public:
  MotionCodeModel() = default;
  /// Glorot-initialized stacks and a standard-normal codebook.
  static MotionCodeModel init(const ModelConfig& config, std::uint64_t seed);

  /// Full forward pass. `trace` receives the decoder weights of the z_q stream.
  ForwardPass<T> forward(Tape<T>& tape, const Tensor<T>& frames, std::span<const std::size_t> allowed,
                         bool tv_straight_through = true, AttentionStack* trace = nullptr) const;

  /// Parameters in a fixed order: encoder, decoder, codebook.
  std::vector<NamedTensor<T>> parameters() const;

  const ModelConfig& config() const { return config_; }

  Encoder<T> encoder;
  Decoder<T> decoder;
  Tensor<T> codebook;

 private:
  ModelConfig config_;
};

}  // namespace motioncode
