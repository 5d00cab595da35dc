#include "motioncode/probing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>

#include <json.hpp>

#include "motioncode/errors.hpp"

namespace motioncode {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a == 0 || b == 0) throw InvalidArgument(std::string(what) + ": empty input");
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": prediction has " + std::to_string(a) + " entries, ground truth " +
                          std::to_string(b));
  }
}

std::vector<int> collapse(std::span<const int> labels) {
  std::vector<int> out;
  for (auto l : labels) {
    if (out.empty() || out.back() != l) out.push_back(l);
  }
  return out;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<LabelSegment> label_segments(std::span<const int> labels) {
  std::vector<LabelSegment> out;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (out.empty() || out.back().label != labels[t]) {
      out.push_back({t, t + 1, labels[t]});
    } else {
      out.back().end = t + 1;
    }
  }
  return out;
}

double frame_accuracy(std::span<const int> pred, std::span<const int> gt) {
  require_same_length(pred.size(), gt.size(), "frame_accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gt[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double edit_score(std::span<const int> pred, std::span<const int> gt) {
  require_same_length(pred.size(), gt.size(), "edit_score");
  const auto p = collapse(pred), g = collapse(gt);
  const double d = static_cast<double>(levenshtein(p, g));
  return std::max(0.0, (1.0 - d / static_cast<double>(std::max(p.size(), g.size()))) * 100.0);
}

double f1_at_overlap(std::span<const LabelSegment> pred, std::span<const LabelSegment> gt, double overlap) {
  struct Pair {
    double iou;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (pred[i].label != gt[j].label) continue;
      const auto lo = std::max(pred[i].start, gt[j].start), hi = std::min(pred[i].end, gt[j].end);
      if (hi <= lo) continue;
      const auto uni = std::max(pred[i].end, gt[j].end) - std::min(pred[i].start, gt[j].start);
      const double iou = static_cast<double>(hi - lo) / static_cast<double>(uni);
      if (iou >= overlap) pairs.push_back({iou, i, j});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<bool> used_p(pred.size()), used_g(gt.size());
  std::size_t tp = 0;
  for (const auto& pr : pairs) {
    if (used_p[pr.p] || used_g[pr.g]) continue;
    used_p[pr.p] = used_g[pr.g] = true;
    ++tp;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double f1_at_50(std::span<const LabelSegment> pred, std::span<const LabelSegment> gt) {
  return f1_at_overlap(pred, gt, 0.5);
}

double f1_at_50(std::span<const int> pred, std::span<const int> gt) {
  require_same_length(pred.size(), gt.size(), "f1_at_50");
  return f1_at_50(label_segments(pred), label_segments(gt));
}

ClassificationScores classification_metrics(std::span<const int> pred, std::span<const int> gt) {
  require_same_length(pred.size(), gt.size(), "classification_metrics");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // hits, total
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    auto& c = per_class[gt[i]];
    ++c.second;
    if (pred[i] == gt[i]) {
      ++c.first;
      ++correct;
    }
  }
  double recall = 0.0;
  for (const auto& [label, c] : per_class) recall += static_cast<double>(c.first) / static_cast<double>(c.second);
  return {100.0 * static_cast<double>(correct) / static_cast<double>(gt.size()),
          100.0 * recall / static_cast<double>(per_class.size())};
}

MetricReport evaluate_segmentation(std::span<const std::vector<int>> pred, std::span<const std::vector<int>> gt,
                                   const std::string& split) {
  require_same_length(pred.size(), gt.size(), "evaluate_segmentation");
  MetricReport r{"segmentation", split};
  std::vector<int> all_p, all_g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r.edit += edit_score(pred[i], gt[i]);
    r.f1_50 += f1_at_50(std::span<const int>(pred[i]), std::span<const int>(gt[i]));
    all_p.insert(all_p.end(), pred[i].begin(), pred[i].end());
    all_g.insert(all_g.end(), gt[i].begin(), gt[i].end());
  }
  r.edit /= static_cast<double>(pred.size());
  r.f1_50 /= static_cast<double>(pred.size());
  r.frame_accuracy = frame_accuracy(all_p, all_g);
  const auto c = classification_metrics(all_p, all_g);
  r.micro_accuracy = c.micro_accuracy;
  r.macro_recall = c.macro_recall;
  return r;
}

MetricReport evaluate_classification(std::span<const int> pred, std::span<const int> gt, const std::string& split) {
  const auto c = classification_metrics(pred, gt);
  MetricReport r{"classification", split};
  r.micro_accuracy = c.micro_accuracy;
  r.macro_recall = c.macro_recall;
  r.frame_accuracy = r.edit = r.f1_50 = c.micro_accuracy;
  return r;
}

void write_metric_reports_csv(std::span<const MetricReport> reports, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "task,split,frame_accuracy,edit,f1_50,micro_accuracy,macro_recall\n" << std::setprecision(10);
  for (const auto& r : reports) {
    out << r.task << ',' << r.split << ',' << r.frame_accuracy << ',' << r.edit << ',' << r.f1_50 << ','
        << r.micro_accuracy << ',' << r.macro_recall << '\n';
  }
}

void write_metric_reports_json(std::span<const MetricReport> reports, const std::filesystem::path& path) {
  auto j = nlohmann::json::array();
  for (const auto& r : reports) {
    j.push_back({{"task", r.task},
                 {"split", r.split},
                 {"frame_accuracy", r.frame_accuracy},
                 {"edit", r.edit},
                 {"f1_50", r.f1_50},
                 {"micro_accuracy", r.micro_accuracy},
                 {"macro_recall", r.macro_recall}});
  }
  open_output(path) << j.dump(2) << '\n';
}

void write_timeline_csv(std::span<const int> gt, std::span<const int> pred, const std::filesystem::path& path) {
  require_same_length(pred.size(), gt.size(), "write_timeline_csv");
  auto out = open_output(path);
  out << "frame,gt_label,pred_label\n";
  for (std::size_t t = 0; t < gt.size(); ++t) out << t << ',' << gt[t] << ',' << pred[t] << '\n';
}

// ---- probes ----

namespace {

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;

  void step(std::vector<double>& p, const std::vector<double>& g, const ProbeConfig& c) {
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    ++t;
    const double b1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double b2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= c.learning_rate * (m[i] / b1) / (std::sqrt(v[i] / b2) + c.adam_eps);
    }
  }
};

void check_labels(std::span<const int> labels, std::size_t classes) {
  for (auto l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw InvalidArgument("label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

/// Softmax cross-entropy of one logit row; overwrites `row` with d(loss)/d(logits).
double cross_entropy(double* row, std::size_t classes, int label) {
  double mx = row[0];
  for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
  double z = 0.0;
  for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
  const double loss = std::log(z) + mx - row[label];
  for (std::size_t c = 0; c < classes; ++c) row[c] = std::exp(row[c] - mx) / z - (static_cast<int>(c) == label);
  return loss;
}

/// Features as distinct rows plus a per-frame index; quantized features have at most K distinct rows.
struct IndexedFeatures {
  FrameMatrix rows;
  std::vector<std::size_t> index;
};

IndexedFeatures index_features(const FrameMatrix& f) {
  std::map<std::vector<double>, std::size_t> seen;
  IndexedFeatures out;
  out.index.resize(static_cast<std::size_t>(f.rows()));
  std::vector<Eigen::Index> firsts;
  for (Eigen::Index t = 0; t < f.rows(); ++t) {
    std::vector<double> key(f.row(t).data(), f.row(t).data() + f.cols());
    auto [it, fresh] = seen.try_emplace(std::move(key), firsts.size());
    if (fresh) firsts.push_back(t);
    out.index[static_cast<std::size_t>(t)] = it->second;
  }
  out.rows.resize(static_cast<Eigen::Index>(firsts.size()), f.cols());
  for (std::size_t i = 0; i < firsts.size(); ++i) out.rows.row(static_cast<Eigen::Index>(i)) = f.row(firsts[i]);
  return out;
}

/// Weight laid out as D x (taps * classes).
FrameMatrix tap_matrix(const SegmentationHead& h) {
  FrameMatrix w(static_cast<Eigen::Index>(h.dim), static_cast<Eigen::Index>(h.taps * h.classes));
  for (std::size_t k = 0; k < h.taps; ++k) {
    for (std::size_t d = 0; d < h.dim; ++d) {
      for (std::size_t c = 0; c < h.classes; ++c) {
        w(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k * h.classes + c)) =
            h.weight[(k * h.dim + d) * h.classes + c];
      }
    }
  }
  return w;
}

void check_head_input(const SegmentationHead& h, const FrameMatrix& f) {
  if (static_cast<std::size_t>(f.cols()) != h.dim) {
    throw InvalidArgument("segmentation head expects " + std::to_string(h.dim) + " feature channels, got " +
                          std::to_string(f.cols()));
  }
  if (f.rows() == 0) throw InvalidArgument("segmentation head: empty sequence");
}

FrameMatrix segment_logits(const SegmentationHead& h, const IndexedFeatures& x, const FrameMatrix& taps) {
  const FrameMatrix a = x.rows * taps;  // distinct rows x (taps * classes)
  const std::size_t n = x.index.size(), half = h.taps / 2, cls = h.classes;
  FrameMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cls));
  for (std::size_t t = 0; t < n; ++t) {
    double* row = &out(static_cast<Eigen::Index>(t), 0);
    for (std::size_t c = 0; c < cls; ++c) row[c] = h.bias[c];
    for (std::size_t k = 0; k < h.taps; ++k) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(half);
      const std::size_t src = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(s, 0, static_cast<std::ptrdiff_t>(n - 1)));
      const double* ar = &a(static_cast<Eigen::Index>(x.index[src]), static_cast<Eigen::Index>(k * cls));
      for (std::size_t c = 0; c < cls; ++c) row[c] += ar[c];
    }
  }
  return out;
}

double segmentation_loss_indexed(const SegmentationHead& h, std::span<const IndexedFeatures> xs,
                                 std::span<const ProbeSample> data, SegmentationHead* grad) {
  const FrameMatrix taps = tap_matrix(h);
  std::size_t total = 0;
  for (const auto& s : data) total += s.labels.size();
  FrameMatrix dtaps = FrameMatrix::Zero(taps.rows(), taps.cols());
  std::vector<double> dbias(h.classes, 0.0);
  double loss = 0.0;
  const std::size_t half = h.taps / 2, cls = h.classes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    FrameMatrix logits = segment_logits(h, xs[i], taps);
    const std::size_t n = xs[i].index.size();
    for (std::size_t t = 0; t < n; ++t) {
      loss += cross_entropy(&logits(static_cast<Eigen::Index>(t), 0), cls, data[i].labels[t]);
    }
    if (!grad) continue;
    logits /= static_cast<double>(total);
    FrameMatrix g = FrameMatrix::Zero(xs[i].rows.rows(), taps.cols());
    for (std::size_t t = 0; t < n; ++t) {
      const double* dl = &logits(static_cast<Eigen::Index>(t), 0);
      for (std::size_t c = 0; c < cls; ++c) dbias[c] += dl[c];
      for (std::size_t k = 0; k < h.taps; ++k) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(half);
        const std::size_t src = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(s, 0, static_cast<std::ptrdiff_t>(n - 1)));
        double* gr = &g(static_cast<Eigen::Index>(xs[i].index[src]), static_cast<Eigen::Index>(k * cls));
        for (std::size_t c = 0; c < cls; ++c) gr[c] += dl[c];
      }
    }
    dtaps.noalias() += xs[i].rows.transpose() * g;
  }
  if (grad) {
    *grad = SegmentationHead::zeros(h.taps, h.dim, h.classes);
    for (std::size_t k = 0; k < h.taps; ++k) {
      for (std::size_t d = 0; d < h.dim; ++d) {
        for (std::size_t c = 0; c < cls; ++c) {
          grad->weight[(k * h.dim + d) * cls + c] =
              dtaps(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k * cls + c));
        }
      }
    }
    grad->bias = dbias;
  }
  return loss / static_cast<double>(total);
}

void check_samples(std::span<const ProbeSample> data, std::size_t dim, std::size_t classes) {
  if (data.empty()) throw InvalidArgument("probe training needs at least one sequence");
  for (const auto& s : data) {
    if (static_cast<std::size_t>(s.features.rows()) != s.labels.size()) {
      throw InvalidArgument("probe sample has " + std::to_string(s.features.rows()) + " frames but " +
                            std::to_string(s.labels.size()) + " labels");
    }
    if (static_cast<std::size_t>(s.features.cols()) != dim) throw InvalidArgument("probe samples differ in width");
    if (s.labels.empty()) throw InvalidArgument("probe sample has no frames");
    check_labels(s.labels, classes);
  }
}

}  // namespace

SegmentationHead SegmentationHead::zeros(std::size_t taps, std::size_t dim, std::size_t classes) {
  if (taps % 2 == 0) throw InvalidArgument("segmentation head needs an odd number of taps, got " + std::to_string(taps));
  if (classes == 0 || dim == 0) throw InvalidArgument("segmentation head needs classes and features");
  return {taps, dim, classes, std::vector<double>(taps * dim * classes, 0.0), std::vector<double>(classes, 0.0)};
}

FrameMatrix SegmentationHead::logits(const FrameMatrix& features) const {
  check_head_input(*this, features);
  return segment_logits(*this, index_features(features), tap_matrix(*this));
}

std::vector<int> SegmentationHead::predict(const FrameMatrix& features) const {
  const FrameMatrix l = logits(features);
  std::vector<int> out(static_cast<std::size_t>(l.rows()));
  for (Eigen::Index t = 0; t < l.rows(); ++t) {
    Eigen::Index best = 0;
    l.row(t).maxCoeff(&best);
    out[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return out;
}

double segmentation_loss(const SegmentationHead& head, std::span<const ProbeSample> data, SegmentationHead* grad) {
  check_samples(data, head.dim, head.classes);
  std::vector<IndexedFeatures> xs;
  for (const auto& s : data) xs.push_back(index_features(s.features));
  return segmentation_loss_indexed(head, xs, data, grad);
}

SegmentationHead train_segmentation_probe(std::span<const ProbeSample> data, std::size_t classes,
                                          const ProbeConfig& config) {
  if (data.empty()) throw InvalidArgument("probe training needs at least one sequence");
  auto head = SegmentationHead::zeros(config.taps, static_cast<std::size_t>(data.front().features.cols()), classes);
  check_samples(data, head.dim, classes);
  std::vector<IndexedFeatures> xs;
  for (const auto& s : data) xs.push_back(index_features(s.features));
  Adam adam_w, adam_b;
  SegmentationHead grad;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    segmentation_loss_indexed(head, xs, data, &grad);
    adam_w.step(head.weight, grad.weight, config);
    adam_b.step(head.bias, grad.bias, config);
  }
  return head;
}

ClassificationHead ClassificationHead::zeros(std::size_t dim, std::size_t classes) {
  if (classes == 0 || dim == 0) throw InvalidArgument("classification head needs classes and features");
  return {dim, classes, std::vector<double>(dim * classes, 0.0), std::vector<double>(classes, 0.0)};
}

Eigen::RowVectorXd mean_pool(const FrameMatrix& features) {
  if (features.rows() == 0) throw InvalidArgument("cannot pool an empty sequence");
  return features.colwise().mean();
}

std::vector<double> ClassificationHead::logits(const FrameMatrix& features) const {
  if (static_cast<std::size_t>(features.cols()) != dim) {
    throw InvalidArgument("classification head expects " + std::to_string(dim) + " feature channels, got " +
                          std::to_string(features.cols()));
  }
  const Eigen::RowVectorXd x = mean_pool(features);
  std::vector<double> out = bias;
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t c = 0; c < classes; ++c) out[c] += x[static_cast<Eigen::Index>(d)] * weight[d * classes + c];
  }
  return out;
}

int ClassificationHead::predict(const FrameMatrix& features) const {
  const auto l = logits(features);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

double classification_loss(const ClassificationHead& head, std::span<const FrameMatrix> features,
                           std::span<const int> labels, ClassificationHead* grad) {
  if (features.size() != labels.size() || features.empty()) {
    throw InvalidArgument("classification probe has " + std::to_string(features.size()) + " sequences and " +
                          std::to_string(labels.size()) + " labels");
  }
  check_labels(labels, head.classes);
  if (grad) *grad = ClassificationHead::zeros(head.dim, head.classes);
  const double inv = 1.0 / static_cast<double>(features.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto l = head.logits(features[i]);
    loss += cross_entropy(l.data(), head.classes, labels[i]);
    if (!grad) continue;
    const Eigen::RowVectorXd x = mean_pool(features[i]);
    for (std::size_t c = 0; c < head.classes; ++c) {
      grad->bias[c] += inv * l[c];
      for (std::size_t d = 0; d < head.dim; ++d) {
        grad->weight[d * head.classes + c] += inv * l[c] * x[static_cast<Eigen::Index>(d)];
      }
    }
  }
  return loss * inv;
}

ClassificationHead train_classification_probe(std::span<const FrameMatrix> features, std::span<const int> labels,
                                              std::size_t classes, const ProbeConfig& config) {
  if (features.empty()) throw InvalidArgument("probe training needs at least one sequence");
  auto head = ClassificationHead::zeros(static_cast<std::size_t>(features.front().cols()), classes);
  Adam adam_w, adam_b;
  ClassificationHead grad;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    classification_loss(head, features, labels, &grad);
    adam_w.step(head.weight, grad.weight, config);
    adam_b.step(head.bias, grad.bias, config);
  }
  return head;
}

}  // namespace motioncode
