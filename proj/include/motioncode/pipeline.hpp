#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "motioncode/analysis.hpp"
#include "motioncode/dataio.hpp"
#include "motioncode/model.hpp"
#include "motioncode/probing.hpp"
#include "motioncode/trainer.hpp"

namespace motioncode {

enum class ProbeTask { Segmentation, Classification };
ProbeTask parse_probe_task(const std::string& name);
std::string to_string(ProbeTask task);

struct AnalysisConfig {
  KeyframeOptions keyframes;
  std::size_t layout_iterations = 50;
};

/// Everything one command needs. Sections: [run], [synth], [primitive.*],
/// [subject.*], [model], [train], [loss], [analysis], [probe].
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  SyntheticConfig synth = SyntheticConfig::default_config();
  ModelConfig model;
  TrainConfig train;
  AnalysisConfig analysis;
  ProbeConfig probe;
  ProbeTask task = ProbeTask::Segmentation;

  /// Unknown sections or keys are ParseErrors.
  static RunConfig from_file(const KeyValueFile& file);
  static RunConfig load(const std::filesystem::path& path);
  KeyValueFile to_file() const;
  /// Propagates the run seed and checks every part.
  void validate() const;
  /// FNV-1a of the canonical text form.
  std::uint64_t hash() const;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Written as run_manifest.json in every output directory.
struct RunManifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;

  void write(const std::filesystem::path& out_dir) const;
};

/// Synthetic dataset plus manifest; returns the manifest path.
std::filesystem::path cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);

struct TrainResult {
  std::filesystem::path checkpoint;
  TrainingLog log;
};
TrainResult cmd_train(const RunConfig& config, const std::filesystem::path& manifest,
                      const std::filesystem::path& out_dir);

/// Normalized sequences with their encodings, in manifest order.
struct EncodedDataset {
  std::vector<MotionSequence> sequences;
  std::vector<Encoding<float>> encodings;
};
EncodedDataset encode_dataset(const TrainingState<float>& state, const DatasetManifest& manifest,
                              std::size_t threads = 1);

/// codes/<sequence>.csv and code_usage.json.
void cmd_encode(const RunConfig& config, const std::filesystem::path& checkpoint,
                const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

struct AnalysisSummary {
  std::vector<std::string> sequences;
  std::vector<std::size_t> keyframes;  // per sequence
  std::size_t total_keyframes = 0;
  std::size_t graph_nodes = 0;
  std::size_t graph_edges = 0;
};
/// Keyframe and weight-sum CSVs per sequence, plus DOT/JSON graphs for all
/// sequences and for each subject.
AnalysisSummary cmd_analyze(const RunConfig& config, const std::filesystem::path& checkpoint,
                            const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

/// Trains on the train split and reports train and test metrics.
std::vector<MetricReport> cmd_probe(const RunConfig& config, const std::filesystem::path& checkpoint,
                                    const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

/// Collects the artifacts of a run directory into report.json and returns a
/// short text summary.
std::string cmd_report(const std::filesystem::path& run_dir);

}  // namespace motioncode
