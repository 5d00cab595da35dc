#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "motioncode/dataio.hpp"

namespace motioncode {

// ---- metrics (percent scale) ----

struct LabelSegment {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  int label = 0;

  bool operator==(const LabelSegment&) const = default;
};

std::vector<LabelSegment> label_segments(std::span<const int> labels);

double frame_accuracy(std::span<const int> pred, std::span<const int> gt);
std::size_t levenshtein(std::span<const int> a, std::span<const int> b);
double edit_score(std::span<const int> pred, std::span<const int> gt);
double f1_at_overlap(std::span<const LabelSegment> pred, std::span<const LabelSegment> gt, double overlap);
double f1_at_50(std::span<const LabelSegment> pred, std::span<const LabelSegment> gt);
double f1_at_50(std::span<const int> pred, std::span<const int> gt);

struct ClassificationScores {
  double micro_accuracy = 0.0;
  double macro_recall = 0.0;
};

/// Macro recall averages over classes present in `gt`.
ClassificationScores classification_metrics(std::span<const int> pred, std::span<const int> gt);

struct MetricReport {
  std::string task;
  std::string split;
  double frame_accuracy = 0.0;
  double edit = 0.0;
  double f1_50 = 0.0;
  double micro_accuracy = 0.0;
  double macro_recall = 0.0;
};

/// Frame accuracy, micro and macro pool all frames; edit and F1@50 average per sequence.
MetricReport evaluate_segmentation(std::span<const std::vector<int>> pred, std::span<const std::vector<int>> gt,
                                   const std::string& split);
/// One prediction per sequence; the frame-wise scores treat each sequence as a single segment.
MetricReport evaluate_classification(std::span<const int> pred, std::span<const int> gt, const std::string& split);

void write_metric_reports_csv(std::span<const MetricReport> reports, const std::filesystem::path& path);
void write_metric_reports_json(std::span<const MetricReport> reports, const std::filesystem::path& path);
/// frame,gt_label,pred_label
void write_timeline_csv(std::span<const int> gt, std::span<const int> pred, const std::filesystem::path& path);

// ---- linear probes ----

struct ProbeConfig {
  std::size_t epochs = 300;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t taps = 501;  // odd; centred on the frame
};

struct ProbeSample {
  FrameMatrix features;  // frames x D, frozen
  std::vector<int> labels;
};

/// One 1-D convolution over frames with replication padding.
struct SegmentationHead {
  std::size_t taps = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> weight;  // [(k * dim + d) * classes + c]
  std::vector<double> bias;

  static SegmentationHead zeros(std::size_t taps, std::size_t dim, std::size_t classes);
  FrameMatrix logits(const FrameMatrix& features) const;
  std::vector<int> predict(const FrameMatrix& features) const;
};

/// Mean frame-wise cross-entropy; fills `grad` (same shape as `head`) when given.
double segmentation_loss(const SegmentationHead& head, std::span<const ProbeSample> data,
                         SegmentationHead* grad = nullptr);
SegmentationHead train_segmentation_probe(std::span<const ProbeSample> data, std::size_t classes,
                                          const ProbeConfig& config = {});

/// Linear layer on the sequence-mean feature vector.
struct ClassificationHead {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> weight;  // [d * classes + c]
  std::vector<double> bias;

  static ClassificationHead zeros(std::size_t dim, std::size_t classes);
  std::vector<double> logits(const FrameMatrix& features) const;
  int predict(const FrameMatrix& features) const;
};

Eigen::RowVectorXd mean_pool(const FrameMatrix& features);

/// Mean cross-entropy over sequences.
double classification_loss(const ClassificationHead& head, std::span<const FrameMatrix> features,
                           std::span<const int> labels, ClassificationHead* grad = nullptr);
ClassificationHead train_classification_probe(std::span<const FrameMatrix> features, std::span<const int> labels,
                                              std::size_t classes, const ProbeConfig& config = {});

}  // namespace motioncode
