#include "motioncode/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "motioncode/checkpoint.hpp"
#include "motioncode/errors.hpp"

namespace motioncode {

// ---- configuration -----------------------------------------------------------

void TrainConfig::validate(const ModelConfig& model) const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (steps_per_epoch < 1) throw ValidationError("train: steps_per_epoch must be >= 1");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ValidationError("train: learning_rate must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ValidationError("train: Adam decays must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ValidationError("train: adam_eps must be > 0");
  if (!(clip_norm >= 0)) throw ValidationError("train: clip_norm must be >= 0");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (chunk_frames <= std::max(model.encoder_window, model.decoder_window)) {
    throw ValidationError("train: chunk_frames (" + std::to_string(chunk_frames) +
                          ") must exceed both attention windows");
  }
  loss.validate();
}

TrainConfig TrainConfig::from_file(const KeyValueFile& file) {
  TrainConfig c;
  SectionReader t(file, file.find("train"));
  c.epochs = t.count_or("epochs", c.epochs);
  c.steps_per_epoch = t.count_or("steps_per_epoch", c.steps_per_epoch);
  c.learning_rate = t.number_or("learning_rate", c.learning_rate);
  c.beta1 = t.number_or("beta1", c.beta1);
  c.beta2 = t.number_or("beta2", c.beta2);
  c.adam_eps = t.number_or("adam_eps", c.adam_eps);
  c.clip_norm = t.number_or("clip_norm", c.clip_norm);
  c.chunk_frames = t.count_or("chunk_frames", c.chunk_frames);
  c.batch_size = t.count_or("batch_size", c.batch_size);
  c.seed = t.count_or("seed", c.seed);
  c.codebook_from_data = t.flag_or("codebook_from_data", c.codebook_from_data);
  c.restriction.enabled = t.flag_or("restriction", c.restriction.enabled);
  c.restriction.group_size = t.count_or("restriction_group_size", c.restriction.group_size);
  c.restriction.freeze = t.flag_or("freeze_restriction", c.restriction.freeze);
  t.finish();

  SectionReader l(file, file.find("loss"));
  c.loss.alpha = l.number_or("alpha", c.loss.alpha);
  c.loss.beta = l.number_or("beta", c.loss.beta);
  c.loss.gamma = l.number_or("gamma", c.loss.gamma);
  c.loss.tv_straight_through = l.flag_or("tv_straight_through", c.loss.tv_straight_through);
  l.finish();
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::write(KeyValueFile& file) const {
  auto& t = file.add_section("train");
  auto put = [](KeyValueFile::Section& s, const char* k, const std::string& v) { s.entries.push_back({k, v, 0}); };
  put(t, "epochs", std::to_string(epochs));
  put(t, "steps_per_epoch", std::to_string(steps_per_epoch));
  put(t, "learning_rate", fmt(learning_rate));
  put(t, "beta1", fmt(beta1));
  put(t, "beta2", fmt(beta2));
  put(t, "adam_eps", fmt(adam_eps));
  put(t, "clip_norm", fmt(clip_norm));
  put(t, "chunk_frames", std::to_string(chunk_frames));
  put(t, "batch_size", std::to_string(batch_size));
  put(t, "seed", std::to_string(seed));
  put(t, "codebook_from_data", codebook_from_data ? "true" : "false");
  put(t, "restriction", restriction.enabled ? "true" : "false");
  put(t, "restriction_group_size", std::to_string(restriction.group_size));
  put(t, "freeze_restriction", restriction.freeze ? "true" : "false");
  auto& l = file.add_section("loss");
  put(l, "alpha", fmt(loss.alpha));
  put(l, "beta", fmt(loss.beta));
  put(l, "gamma", fmt(loss.gamma));
  put(l, "tv_straight_through", loss.tv_straight_through ? "true" : "false");
}

void TrainingLog::write_steps_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,epoch,L,L_p,L_v,L_vc,L_tv,codes_used\n";
  for (const auto& s : steps) {
    out << s.step << ',' << s.epoch << ',' << fmt(s.loss) << ',' << fmt(s.position) << ',' << fmt(s.velocity) << ','
        << fmt(s.vq) << ',' << fmt(s.tv) << ',' << s.codes_used << '\n';
  }
}

void TrainingLog::write_epochs_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,codes_used,dead_codes,entropy_bits,mean_segment_length\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.codes_used << ',' << e.dead_codes << ',' << fmt(e.entropy_bits) << ','
        << fmt(e.mean_segment_length) << '\n';
  }
}

// ---- conversions ---------------------------------------------------------------

template <typename T>
Tensor<T> to_tensor(const FrameMatrix& m, bool requires_grad) {
  std::vector<T> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<T>(m.data()[i]);
  return Tensor<T>::from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v),
                         requires_grad);
}

template <typename T>
FrameMatrix to_matrix(const Tensor<T>& t) {
  if (t.rank() != 2) throw InvalidArgument("to_matrix: expected a rank-2 tensor");
  FrameMatrix m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = static_cast<double>(v[i]);
  return m;
}

// ---- checkpoints -----------------------------------------------------------------

namespace {

constexpr std::size_t kConfigFields = 9;

template <typename T>
StoredTensor store(const std::string& name, const Shape& dims, std::span<const T> values) {
  StoredTensor s{name, dims, std::vector<float>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) s.values[i] = static_cast<float>(values[i]);
  return s;
}

StoredTensor store_numbers(const std::string& name, const std::vector<double>& values) {
  StoredTensor s{name, {values.size()}, {}};
  for (double v : values) s.values.push_back(static_cast<float>(v));
  return s;
}

template <typename T>
std::vector<StoredTensor> checkpoint_tensors(const TrainingState<T>& state) {
  std::vector<StoredTensor> out;
  const auto params = state.model.parameters();
  for (const auto& p : params) out.push_back(store<T>(p.name, p.tensor.dims(), p.tensor.values()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = state.adam.m.empty() ? std::vector<T>(params[i].tensor.size(), T(0)) : state.adam.m[i];
    out.push_back(store<T>("adam.m." + params[i].name, params[i].tensor.dims(), m));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = state.adam.v.empty() ? std::vector<T>(params[i].tensor.size(), T(0)) : state.adam.v[i];
    out.push_back(store<T>("adam.v." + params[i].name, params[i].tensor.dims(), v));
  }
  const auto& c = state.model.config();
  out.push_back(store_numbers("meta.config",
                              {double(c.io_dim), double(c.model_dim), double(c.heads), double(c.ffn_dim),
                               double(c.encoder_layers), double(c.encoder_window), double(c.decoder_layers),
                               double(c.decoder_window), double(c.codebook_size)}));
  std::vector<double> meta{double(state.epoch), double(state.step), double(state.adam.t),
                           state.codebook_ready ? 1.0 : 0.0};
  for (int q = 0; q < 4; ++q) meta.push_back(double((state.seed >> (16 * q)) & 0xFFFFu));
  out.push_back(store_numbers("meta.state", meta));
  out.push_back(store_numbers("data.norm_mean", state.normalization.mean));
  out.push_back(store_numbers("data.norm_std", state.normalization.stddev));
  const auto& plan = state.plan;
  out.push_back(store_numbers("restriction.meta", {plan.all_allowed ? 1.0 : 0.0, double(plan.codebook_size),
                                                   double(plan.subsets.size())}));
  std::vector<double> choice(plan.choice.begin(), plan.choice.end());
  out.push_back(store_numbers("restriction.choice", choice));
  for (std::size_t i = 0; i < plan.subsets.size(); ++i) {
    out.push_back(store_numbers("restriction.subset." + std::to_string(i),
                                std::vector<double>(plan.subsets[i].begin(), plan.subsets[i].end())));
  }
  return out;
}

std::size_t as_count(float v, const std::string& what) {
  if (!(v >= 0) || v != std::floor(v)) throw FormatError("checkpoint field " + what + " is not a count");
  return static_cast<std::size_t>(v);
}

}  // namespace

template <typename T>
std::vector<std::string> checkpoint_inventory(const TrainingState<T>& state) {
  std::vector<std::string> names;
  for (const auto& t : checkpoint_tensors(state)) names.push_back(t.name);
  return names;
}

template <typename T>
void save_checkpoint(const TrainingState<T>& state, const std::filesystem::path& path) {
  const auto tensors = checkpoint_tensors(state);
  write_tensor_file(path, tensors);
}

template <typename T>
TrainingState<T> load_checkpoint(const std::filesystem::path& path) {
  const auto stored = read_tensor_file(path);
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : stored) by_name[t.name] = &t;
  auto need = [&](const std::string& name) -> const StoredTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path.string() + ": missing tensor " + name);
    return *it->second;
  };

  const auto& cfg_t = need("meta.config");
  if (cfg_t.values.size() != kConfigFields) throw FormatError(path.string() + ": meta.config has the wrong size");
  ModelConfig cfg;
  std::size_t* fields[kConfigFields] = {&cfg.io_dim,         &cfg.model_dim,      &cfg.heads,
                                        &cfg.ffn_dim,        &cfg.encoder_layers, &cfg.encoder_window,
                                        &cfg.decoder_layers, &cfg.decoder_window, &cfg.codebook_size};
  for (std::size_t i = 0; i < kConfigFields; ++i) *fields[i] = as_count(cfg_t.values[i], "meta.config");
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": invalid model configuration: " + e.what());
  }

  TrainingState<T> state;
  state.model = MotionCodeModel<T>::init(cfg, 0);
  auto params = state.model.parameters();
  auto fill = [&](const StoredTensor& src, const Shape& dims, std::span<T> dst) {
    if (src.dims != dims) {
      throw FormatError(path.string() + ": tensor " + src.name + " has shape " + shape_string(src.dims) +
                        ", expected " + shape_string(dims));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.values[i]);
  };
  for (auto& p : params) fill(need(p.name), p.tensor.dims(), p.tensor.mutable_values());
  for (auto& p : params) {
    state.adam.m.emplace_back(p.tensor.size());
    fill(need("adam.m." + p.name), p.tensor.dims(), state.adam.m.back());
    state.adam.v.emplace_back(p.tensor.size());
    fill(need("adam.v." + p.name), p.tensor.dims(), state.adam.v.back());
  }

  const auto& meta = need("meta.state");
  if (meta.values.size() != 8) throw FormatError(path.string() + ": meta.state has the wrong size");
  state.epoch = as_count(meta.values[0], "epoch");
  state.step = as_count(meta.values[1], "step");
  state.adam.t = as_count(meta.values[2], "adam step");
  state.codebook_ready = meta.values[3] != 0.0f;
  for (int q = 0; q < 4; ++q) state.seed |= std::uint64_t(as_count(meta.values[4 + q], "seed")) << (16 * q);

  for (float v : need("data.norm_mean").values) state.normalization.mean.push_back(v);
  for (float v : need("data.norm_std").values) state.normalization.stddev.push_back(v);

  const auto& rmeta = need("restriction.meta");
  if (rmeta.values.size() != 3) throw FormatError(path.string() + ": restriction.meta has the wrong size");
  state.plan.all_allowed = rmeta.values[0] != 0.0f;
  state.plan.codebook_size = as_count(rmeta.values[1], "restriction codebook size");
  const std::size_t subsets = as_count(rmeta.values[2], "restriction subset count");
  for (float v : need("restriction.choice").values) {
    state.plan.choice.push_back(as_count(v, "restriction choice"));
    if (!state.plan.all_allowed && state.plan.choice.back() >= subsets) {
      throw FormatError(path.string() + ": restriction choice out of range");
    }
  }
  for (std::size_t i = 0; i < subsets; ++i) {
    std::vector<std::size_t> s;
    for (float v : need("restriction.subset." + std::to_string(i)).values) s.push_back(as_count(v, "code"));
    state.plan.subsets.push_back(std::move(s));
  }
  return state;
}

// ---- gradient clipping and training ----------------------------------------------

double clip_factor(double norm, double limit) {
  return (limit > 0 && norm > limit) ? limit / norm : 1.0;
}

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model, const TrainConfig& config, std::vector<MotionSequence> train,
                    NormalizationStats stats)
    : config_(config), train_(std::move(train)) {
  config_.validate(model);
  if (train_.empty()) throw InvalidArgument("trainer: no training sequences");
  for (const auto& s : train_) {
    s.validate();
    if (s.channel_count() != model.io_dim) {
      throw InvalidArgument("trainer: sequence " + s.sequence_id + " has " + std::to_string(s.channel_count()) +
                            " channels, model expects " + std::to_string(model.io_dim));
    }
  }
  state_.model = MotionCodeModel<T>::init(model, config.seed);
  state_.seed = config.seed;
  state_.normalization = std::move(stats);
  state_.plan = unrestricted_plan(model.codebook_size, train_.size());
}

template <typename T>
Trainer<T>::Trainer(TrainingState<T> state, const TrainConfig& config, std::vector<MotionSequence> train)
    : config_(config), train_(std::move(train)), state_(std::move(state)) {
  config_.validate(state_.model.config());
  if (train_.empty()) throw InvalidArgument("trainer: no training sequences");
  if (state_.plan.choice.size() != train_.size()) {
    state_.plan = unrestricted_plan(state_.model.config().codebook_size, train_.size());
  }
}

template <typename T>
typename Trainer<T>::Chunk Trainer<T>::sample_chunk(std::size_t sequence, std::mt19937_64& rng) const {
  const auto& seq = train_[sequence];
  const std::size_t n = seq.frame_count();
  const std::size_t len = std::min(config_.chunk_frames, n);
  std::uniform_int_distribution<std::size_t> start_dist(0, n - len);
  const std::size_t start = start_dist(rng);
  FrameMatrix block = seq.frames.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
  return {sequence, to_tensor<T>(block)};
}

template <typename T>
void Trainer<T>::initialize() {
  auto params = state_.model.parameters();
  if (!state_.codebook_ready) {
    if (config_.codebook_from_data) {
      std::mt19937_64 rng(state_.seed ^ 0xC0DEB00CULL);
      std::vector<T> rows;
      const std::size_t d = state_.model.config().model_dim;
      for (std::size_t i = 0; i < std::min(config_.batch_size, train_.size()); ++i) {
        auto chunk = sample_chunk(i, rng);
        auto tape = Tape<T>::inference();
        auto z = state_.model.encoder.forward(tape, chunk.frames);
        rows.insert(rows.end(), z.values().begin(), z.values().end());
      }
      const std::size_t n = rows.size() / d;
      auto samples = Tensor<T>::from({n, d}, std::move(rows));
      auto book = init_codebook(samples, state_.model.config().codebook_size, rng);
      std::copy(book.values().begin(), book.values().end(), state_.model.codebook.mutable_values().begin());
    }
    state_.codebook_ready = true;
  }
  if (state_.adam.m.empty()) {
    for (const auto& p : params) {
      state_.adam.m.emplace_back(p.tensor.size(), T(0));
      state_.adam.v.emplace_back(p.tensor.size(), T(0));
    }
  }
}

template <typename T>
void Trainer<T>::apply_update(const std::set<std::size_t>& active_codes) {
  auto params = state_.model.parameters();
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw NumericalError("non-finite gradient norm at step " + std::to_string(state_.step + 1));
  }
  log_.steps.back().grad_norm = norm;
  const double clip = clip_factor(norm, config_.clip_norm);

  auto& adam = state_.adam;
  ++adam.t;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
  const T lr = static_cast<T>(config_.learning_rate);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.tensor.has_grad()) continue;
    auto g = p.tensor.grad();
    auto w = p.tensor.mutable_values();
    auto& m = adam.m[i];
    auto& v = adam.v[i];
    auto update = [&](std::size_t j) {
      const T gj = static_cast<T>(static_cast<double>(g[j]) * clip);
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * gj);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * gj * gj);
      const double step = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.adam_eps);
      w[j] -= lr * static_cast<T>(step);
    };
    if (p.name == "codebook") {
      const std::size_t d = p.tensor.dim(1);
      for (std::size_t code : active_codes)
        for (std::size_t j = code * d; j < (code + 1) * d; ++j) update(j);
    } else {
      for (std::size_t j = 0; j < w.size(); ++j) update(j);
    }
  }
}

template <typename T>
void Trainer<T>::step(std::span<const std::size_t> batch, std::mt19937_64& rng, std::vector<std::set<std::size_t>>& usage,
                      CodeHistogram& histogram, std::vector<std::vector<std::size_t>>& epoch_codes) {
  Tape<T> tape;
  std::vector<LossStreams<T>> streams;
  std::set<std::size_t> active;
  for (std::size_t seq : batch) {
    auto chunk = sample_chunk(seq, rng);
    const auto allowed = state_.plan.allowed(seq);
    auto pass = state_.model.forward(tape, chunk.frames, allowed, config_.loss.tv_straight_through);
    for (std::size_t c : pass.assignment.codes) {
      active.insert(c);
      usage[seq].insert(c);
      ++histogram[c];
    }
    epoch_codes.push_back(pass.assignment.codes);
    streams.push_back(pass.streams(chunk.frames));
  }
  auto report = total_loss<T>(tape, streams, config_.loss);

  const std::size_t step_no = state_.step + 1;
  const std::pair<const char*, double> parts[] = {
      {"position", report.position}, {"velocity", report.velocity}, {"vq", report.vq}, {"tv", report.tv},
      {"total", report.value}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite " + std::string(name) + " loss at step " + std::to_string(step_no));
    }
  }
  log_.steps.push_back({step_no, state_.epoch + 1, report.value, report.position, report.velocity, report.vq, report.tv,
                        active.size(), 0.0});
  tape.backward(report.total);
  apply_update(active);
  state_.step = step_no;
  if (on_step_) on_step_(log_.steps.back());
}

template <typename T>
void Trainer<T>::train_epoch() {
  initialize();
  const std::size_t epoch = state_.epoch + 1;
  const std::size_t j = train_.size();
  std::mt19937_64 rng(state_.seed ^ (0x9E3779B97F4A7C15ULL * epoch));
  auto order = all_codes(j);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t per_step = std::min(config_.batch_size, j);

  std::vector<std::set<std::size_t>> usage(j);
  CodeHistogram histogram;
  std::vector<std::vector<std::size_t>> epoch_codes;
  std::vector<std::size_t> batch(per_step);
  for (std::size_t s = 0; s < config_.steps_per_epoch; ++s) {
    for (std::size_t i = 0; i < per_step; ++i) batch[i] = order[(s * per_step + i) % j];
    step(batch, rng, usage, histogram, epoch_codes);
  }

  EpochRecord rec;
  rec.epoch = epoch;
  rec.codes_used = histogram.size();
  rec.dead_codes = state_.model.config().codebook_size - histogram.size();
  rec.entropy_bits = usage_entropy(histogram);
  rec.mean_segment_length = mean_segment_length(epoch_codes);
  log_.epochs.push_back(rec);
  last_usage_ = usage;
  state_.epoch = epoch;

  const auto& rc = config_.restriction;
  if (!rc.enabled) {
    state_.plan = unrestricted_plan(state_.model.config().codebook_size, j);
  } else if (!(rc.freeze && !state_.plan.all_allowed)) {
    state_.plan = build_restriction(rc, usage, state_.model.config().codebook_size,
                                    state_.seed ^ (0xD1B54A32D192ED03ULL * epoch));
  }
}

template <typename T>
void Trainer<T>::train() {
  while (state_.epoch < config_.epochs) train_epoch();
}

// ---- inference ------------------------------------------------------------------

template <typename T>
Encoding<T> encode_sequence(const MotionCodeModel<T>& model, const FrameMatrix& frames,
                            std::span<const std::size_t> allowed) {
  const auto every = all_codes(model.config().codebook_size);
  if (allowed.empty()) allowed = every;
  auto tape = Tape<T>::inference();
  Encoding<T> out;
  auto pass = model.forward(tape, to_tensor<T>(frames), allowed, true, &out.decoder_attention);
  out.codes = pass.assignment.codes;
  out.segments = pass.assignment.segments;
  out.z_e = to_matrix(pass.z_e);
  out.z_q = to_matrix(pass.assignment.z_q);
  out.output = to_matrix(pass.output);
  out.mean_output = to_matrix(pass.mean_output);
  return out;
}

#define MOTIONCODE_INSTANTIATE_TRAINER(T)                                                         \
  template class Trainer<T>;                                                                     \
  template void save_checkpoint(const TrainingState<T>&, const std::filesystem::path&);          \
  template TrainingState<T> load_checkpoint(const std::filesystem::path&);                       \
  template std::vector<std::string> checkpoint_inventory(const TrainingState<T>&);               \
  template Encoding<T> encode_sequence(const MotionCodeModel<T>&, const FrameMatrix&,            \
                                       std::span<const std::size_t>);                            \
  template Tensor<T> to_tensor(const FrameMatrix&, bool);                                        \
  template FrameMatrix to_matrix(const Tensor<T>&);

MOTIONCODE_INSTANTIATE_TRAINER(float)
MOTIONCODE_INSTANTIATE_TRAINER(double)

#undef MOTIONCODE_INSTANTIATE_TRAINER

}  // namespace motioncode
