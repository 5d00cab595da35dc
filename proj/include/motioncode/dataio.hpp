#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "motioncode/config_file.hpp"

namespace motioncode {

using FrameMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split { Train, Test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// One recorded sequence: n_f frames of n_j channels.
struct MotionSequence {
  std::string sequence_id;
  std::string subject_id;
  double sample_rate = 30.0;
  FrameMatrix frames;
  std::optional<std::vector<int>> labels;
  Split split = Split::Train;

  std::size_t frame_count() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t channel_count() const { return static_cast<std::size_t>(frames.cols()); }

  /// Throws ValidationError when n_f < 2, labels have the wrong length, or a
  /// frame value is not finite.
  void validate() const;
};

enum class Delimiter { Auto, Comma, Whitespace, Tab };

struct ManifestEntry {
  std::filesystem::path path;
  std::string sequence_id;
  std::string subject_id;
  Split split = Split::Train;
};

/// Describes which files make up a dataset and how to read them.
///
/// On disk:
///
///     [dataset]
///     columns = 0-3          # list, ranges, or a preset name
///     label_column = 4       # optional
///     delimiter = auto       # auto | comma | whitespace | tab
///     sample_rate = 30
///
///     [sequence.s000]
///     path = s000.txt        # relative to the manifest's directory
///     subject = A
///     split = train
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::size_t> columns;
  std::optional<std::size_t> label_column;
  Delimiter delimiter = Delimiter::Auto;
  double sample_rate = 30.0;
  std::filesystem::path base_dir;

  static DatasetManifest load(const std::filesystem::path& path);
  static DatasetManifest from_file(const KeyValueFile& file, std::filesystem::path base_dir);
  KeyValueFile to_file() const;
  void save(const std::filesystem::path& path) const;
};

/// Column-selection presets. `jigsaws14` picks position, the first three
/// rotation entries, and the gripper angle of both patient-side arms from the
/// 76-column kinematics layout; `hugadb36` picks the six joints' accelerometer
/// and gyroscope axes.
std::vector<std::size_t> column_preset(const std::string& name);
/// Parses "0,2,5-7" or a preset name.
std::vector<std::size_t> parse_columns(const std::string& text);

MotionSequence load_sequence(const std::filesystem::path& path, const DatasetManifest& manifest,
                             const ManifestEntry& entry);
/// Loads every manifest entry; all must agree on channel count.
std::vector<MotionSequence> load_dataset(const DatasetManifest& manifest);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Computed from the train-split sequences only. Constant channels get a
  /// unit standard deviation and a warning on stderr.
  static NormalizationStats compute(std::span<const MotionSequence> sequences);
  std::size_t channel_count() const { return mean.size(); }
};

MotionSequence normalize(const MotionSequence& seq, const NormalizationStats& stats);
MotionSequence denormalize(const MotionSequence& seq, const NormalizationStats& stats);

// ---- synthetic motion ------------------------------------------------------

enum class Waveform { Sine, Ramp, Hold };

struct ChannelWave {
  Waveform kind = Waveform::Hold;
  double amplitude = 0.0;
  double period = 1.0;  // frames, sine only
  double offset = 0.0;
};

struct MotionPrimitive {
  std::string name;
  std::vector<ChannelWave> channels;
  std::size_t min_frames = 30;
  std::size_t max_frames = 90;
};

struct SyntheticSubject {
  std::string name;
  std::vector<std::size_t> primitives;
  double amplitude_scale = 1.0;
};

struct SyntheticConfig {
  std::size_t channels = 4;
  std::size_t frames_per_sequence = 600;
  std::size_t train_sequences = 8;
  std::size_t test_sequences = 4;
  double sample_rate = 30.0;
  double noise = 0.02;
  std::vector<MotionPrimitive> primitives;
  std::vector<SyntheticSubject> subjects;

  /// Four primitives over four channels, two subjects sharing two of them.
  static SyntheticConfig default_config();
  /// Reads [synth], [primitive.*] and [subject.*]; missing sections fall back
  /// to the defaults.
  static SyntheticConfig from_file(const KeyValueFile& file);
  void write(KeyValueFile& file) const;
  void validate() const;
};

struct GeneratedSegment {
  std::string sequence_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t primitive = 0;
};

struct SyntheticDataset {
  std::vector<MotionSequence> sequences;
  std::vector<GeneratedSegment> log;
};

/// Random concatenations of primitives. Sequences alternate between subjects;
/// the first `train_sequences` are the train split.
SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Writes one whitespace table per sequence (channels then label), a
/// `manifest.ini`, and `ground_truth.csv`. Returns the manifest path.
std::filesystem::path write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir);

}  // namespace motioncode
