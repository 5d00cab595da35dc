#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "motioncode/dataio.hpp"
#include "motioncode/model.hpp"

namespace motioncode {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 100;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t chunk_frames = 2000;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  bool codebook_from_data = true;
  RestrictionConfig restriction;
  LossWeights loss;

  /// Learning rate may be 0 (a dry run); chunks must exceed both windows.
  void validate(const ModelConfig& model) const;

  /// Reads the optional [train] and [loss] sections.
  static TrainConfig from_file(const KeyValueFile& file);
  void write(KeyValueFile& file) const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double position = 0.0;
  double velocity = 0.0;
  double vq = 0.0;
  double tv = 0.0;
  std::size_t codes_used = 0;
  double grad_norm = 0.0;  // before clipping

  bool operator==(const StepRecord&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t codes_used = 0;
  std::size_t dead_codes = 0;
  double entropy_bits = 0.0;
  double mean_segment_length = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// step,epoch,L,L_p,L_v,L_vc,L_tv,codes_used
  void write_steps_csv(const std::filesystem::path& path) const;
  /// epoch,codes_used,dead_codes,entropy_bits,mean_segment_length
  void write_epochs_csv(const std::filesystem::path& path) const;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t t = 0;
};

/// Everything needed to resume training or run inference.
template <typename T>
struct TrainingState {
  MotionCodeModel<T> model;
  AdamState<T> adam;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed steps
  std::uint64_t seed = 0;
  bool codebook_ready = false;
  NormalizationStats normalization;
  RestrictionPlan plan;
};

template <typename T>
void save_checkpoint(const TrainingState<T>& state, const std::filesystem::path& path);
/// Fails with FormatError before touching any state if the file is invalid.
template <typename T>
TrainingState<T> load_checkpoint(const std::filesystem::path& path);
/// Tensor names a checkpoint of `state` contains, in file order.
template <typename T>
std::vector<std::string> checkpoint_inventory(const TrainingState<T>& state);

/// Scale that brings a gradient of global norm `norm` within `limit`; a limit
/// of 0 disables clipping.
double clip_factor(double norm, double limit);

template <typename T>
class Trainer {
 public:
  using StepCallback = std::function<void(const StepRecord&)>;

  /// `train` must already be normalized; `stats` is stored in checkpoints.
  Trainer(const ModelConfig& model, const TrainConfig& config, std::vector<MotionSequence> train,
          NormalizationStats stats = {});
  /// Continues from a checkpoint with a (possibly extended) schedule.
  Trainer(TrainingState<T> state, const TrainConfig& config, std::vector<MotionSequence> train);

  /// Data-driven codebook initialization; idempotent.
  void initialize();
  void train_epoch();
  /// Runs the remaining epochs of the schedule.
  void train();

  void on_step(StepCallback cb) { on_step_ = std::move(cb); }

  const TrainingLog& log() const { return log_; }
  TrainingState<T>& state() { return state_; }
  const TrainingState<T>& state() const { return state_; }
  const TrainConfig& config() const { return config_; }
  /// Codes each training sequence used during the last completed epoch.
  const std::vector<std::set<std::size_t>>& last_usage() const { return last_usage_; }

 private:
  struct Chunk {
    std::size_t sequence;
    Tensor<T> frames;
  };
  Chunk sample_chunk(std::size_t sequence, std::mt19937_64& rng) const;
  void step(std::span<const std::size_t> batch, std::mt19937_64& rng, std::vector<std::set<std::size_t>>& usage,
            CodeHistogram& histogram, std::vector<std::vector<std::size_t>>& epoch_codes);
  void apply_update(const std::set<std::size_t>& active_codes);

  TrainConfig config_;
  std::vector<MotionSequence> train_;
  TrainingState<T> state_;
  TrainingLog log_;
  std::vector<std::set<std::size_t>> last_usage_;
  StepCallback on_step_;
};

/// Inference over a whole sequence.
template <typename T>
struct Encoding {
  std::vector<std::size_t> codes;
  std::vector<Segment> segments;
  FrameMatrix z_e;
  FrameMatrix z_q;
  FrameMatrix output;       // decoded from z_q
  FrameMatrix mean_output;  // decoded from z̄_e
  AttentionStack decoder_attention;
};

template <typename T>
Encoding<T> encode_sequence(const MotionCodeModel<T>& model, const FrameMatrix& frames,
                            std::span<const std::size_t> allowed = {});

template <typename T>
Tensor<T> to_tensor(const FrameMatrix& m, bool requires_grad = false);
template <typename T>
FrameMatrix to_matrix(const Tensor<T>& t);

}  // namespace motioncode
