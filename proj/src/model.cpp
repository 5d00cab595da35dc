#include "motioncode/model.hpp"

#include "motioncode/errors.hpp"

namespace motioncode {

AttentionConfig ModelConfig::encoder() const {
  return {encoder_layers, encoder_window, model_dim, heads, ffn_dim, io_dim};
}

AttentionConfig ModelConfig::decoder() const {
  return {decoder_layers, decoder_window, model_dim, heads, ffn_dim, io_dim};
}

void ModelConfig::validate() const {
  encoder().validate();
  decoder().validate();
  if (codebook_size < 1) throw ValidationError("model: codebook_size must be >= 1");
}

ModelConfig ModelConfig::from_file(const KeyValueFile& file) {
  ModelConfig c;
  SectionReader r(file, file.find("model"));
  c.model_dim = r.count_or("model_dim", c.model_dim);
  c.heads = r.count_or("heads", c.heads);
  c.ffn_dim = r.count_or("ffn_dim", c.ffn_dim);
  c.encoder_layers = r.count_or("encoder_layers", c.encoder_layers);
  c.encoder_window = r.count_or("encoder_window", c.encoder_window);
  c.decoder_layers = r.count_or("decoder_layers", c.decoder_layers);
  c.decoder_window = r.count_or("decoder_window", c.decoder_window);
  c.codebook_size = r.count_or("codebook_size", c.codebook_size);
  r.finish();
  return c;
}

void ModelConfig::write(KeyValueFile& file) const {
  auto& s = file.add_section("model");
  auto put = [&](const char* key, std::size_t v) { s.entries.push_back({key, std::to_string(v), 0}); };
  put("model_dim", model_dim);
  put("heads", heads);
  put("ffn_dim", ffn_dim);
  put("encoder_layers", encoder_layers);
  put("encoder_window", encoder_window);
  put("decoder_layers", decoder_layers);
  put("decoder_window", decoder_window);
  put("codebook_size", codebook_size);
}

template <typename T>
LossStreams<T> ForwardPass<T>::streams(const Tensor<T>& input) const {
  return {input, output, mean_output, z_e, assignment.z_q, z_tv};
}

template <typename T>
MotionCodeModel<T> MotionCodeModel<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  MotionCodeModel m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  m.encoder = Encoder<T>::init(config.encoder(), rng);
  m.decoder = Decoder<T>::init(config.decoder(), rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> rows(config.codebook_size * config.model_dim);
  for (auto& v : rows) v = static_cast<T>(normal(rng));
  m.codebook = Tensor<T>::from({config.codebook_size, config.model_dim}, std::move(rows), true);
  return m;
}

template <typename T>
ForwardPass<T> MotionCodeModel<T>::forward(Tape<T>& tape, const Tensor<T>& frames, std::span<const std::size_t> allowed,
                                           bool tv_straight_through, AttentionStack* trace) const {
  ForwardPass<T> out;
  out.z_e = encoder.forward(tape, frames);
  out.assignment = quantize(tape, out.z_e, codebook, allowed);
  out.output = decoder.forward(tape, out.assignment.z_q_st, trace);
  out.mean_output = decoder.forward(tape, out.assignment.z_bar);
  out.z_tv = tv_straight_through ? straight_through_both(tape, out.z_e, out.assignment.z_q) : out.assignment.z_q;
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> MotionCodeModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  encoder.collect(out);
  decoder.collect(out);
  out.push_back({"codebook", codebook});
  return out;
}

template struct ForwardPass<float>;
template struct ForwardPass<double>;
template class MotionCodeModel<float>;
template class MotionCodeModel<double>;

}  // namespace motioncode
