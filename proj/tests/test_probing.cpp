#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "motioncode/errors.hpp"
#include "motioncode/probing.hpp"
#include "motioncode/trainer.hpp"

using namespace motioncode;

namespace {

std::size_t lev_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min(go(i - 1, j) + 1, go(i, j - 1) + 1);
    best = std::min(best, go(i - 1, j - 1) + (a[i - 1] != b[j - 1]));
    return memo[key] = best;
  };
  return go(a.size(), b.size());
}

std::vector<int> collapsed(const std::vector<int>& v) {
  std::vector<int> out;
  for (int x : v) {
    if (out.empty() || out.back() != x) out.push_back(x);
  }
  return out;
}

std::vector<int> random_stream(std::mt19937_64& rng, std::size_t n, int classes, std::size_t max_segments) {
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::uniform_int_distribution<std::size_t> nseg(1, max_segments);
  const std::size_t k = std::min(nseg(rng), n);
  std::vector<std::size_t> cuts(n - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(k - 1);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(n);
  std::vector<int> out;
  std::size_t start = 0;
  for (auto c : cuts) {
    const int l = label(rng);
    out.insert(out.end(), c - start, l);
    start = c;
  }
  return out;
}

// Maximum number of same-class pairs with IoU >= 0.5 over all one-to-one matchings.
std::size_t best_matching(const std::vector<LabelSegment>& p, const std::vector<LabelSegment>& g, std::size_t i,
                          std::vector<bool>& used) {
  if (i == p.size()) return 0;
  std::size_t best = best_matching(p, g, i + 1, used);
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (used[j] || p[i].label != g[j].label) continue;
    const long inter = std::max(0L, long(std::min(p[i].end, g[j].end)) - long(std::max(p[i].start, g[j].start)));
    const long uni = long(std::max(p[i].end, g[j].end)) - long(std::min(p[i].start, g[j].start));
    if (2 * inter < uni) continue;
    used[j] = true;
    best = std::max(best, 1 + best_matching(p, g, i + 1, used));
    used[j] = false;
  }
  return best;
}

double f1_oracle(const std::vector<LabelSegment>& p, const std::vector<LabelSegment>& g) {
  std::vector<bool> used(g.size());
  const std::size_t tp = best_matching(p, g, 0, used);
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(p.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(g.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

FrameMatrix naive_logits(const SegmentationHead& h, const FrameMatrix& x) {
  const long n = x.rows(), half = long(h.taps / 2);
  FrameMatrix out(n, long(h.classes));
  for (long t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < h.classes; ++c) {
      double v = h.bias[c];
      for (std::size_t k = 0; k < h.taps; ++k) {
        const long s = std::clamp(t + long(k) - half, 0L, n - 1);
        for (std::size_t d = 0; d < h.dim; ++d) v += x(s, long(d)) * h.weight[(k * h.dim + d) * h.classes + c];
      }
      out(t, long(c)) = v;
    }
  }
  return out;
}

// Frames drawn from a few fixed vectors, like quantized features.
FrameMatrix code_features(const FrameMatrix& book, const std::vector<int>& codes) {
  FrameMatrix f(long(codes.size()), book.cols());
  for (std::size_t t = 0; t < codes.size(); ++t) f.row(long(t)) = book.row(codes[t]);
  return f;
}

FrameMatrix random_matrix(long rows, long cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FrameMatrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("label segments and frame accuracy") {
  const std::vector<int> l{2, 2, 0, 0, 0, 2};
  CHECK(label_segments(l) == std::vector<LabelSegment>{{0, 2, 2}, {2, 5, 0}, {5, 6, 2}});
  CHECK(frame_accuracy(std::vector<int>{1, 2, 3, 4}, std::vector<int>{1, 0, 3, 0}) == 50.0);
  CHECK_THROWS_AS(frame_accuracy(std::vector<int>{1}, std::vector<int>{1, 2}), InvalidArgument);
  CHECK_THROWS_AS(frame_accuracy(std::vector<int>{}, std::vector<int>{}), InvalidArgument);
}

TEST_CASE("edit score examples") {
  const std::vector<int> g{0, 1, 0};
  CHECK(edit_score(g, g) == 100.0);
  CHECK(edit_score(std::vector<int>{0, 0, 0}, g) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  CHECK(edit_score(std::vector<int>{5, 5, 6, 6}, std::vector<int>{1, 2, 2, 1}) == 0.0);
  CHECK_THROWS_AS(edit_score(std::vector<int>{}, std::vector<int>{}), InvalidArgument);
}

TEST_CASE("edit score matches a recursive Levenshtein oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = len(rng);
    const auto p = random_stream(rng, n, 4, 8), g = random_stream(rng, n, 4, 8);
    const auto cp = collapsed(p), cg = collapsed(g);
    const auto d = lev_oracle(cp, cg);
    CHECK(levenshtein(cp, cg) == d);
    const double expect = std::max(0.0, (1.0 - double(d) / double(std::max(cp.size(), cg.size()))) * 100.0);
    CHECK(edit_score(p, g) == expect);
    CHECK(edit_score(g, p) == edit_score(p, g));
    std::vector<int> rp = p, rg = g;
    for (auto& x : rp) x = 7 - x;
    for (auto& x : rg) x = 7 - x;
    CHECK(edit_score(rp, rg) == edit_score(p, g));
  }
}

TEST_CASE("F1@50 examples") {
  const std::vector<int> g{0, 0, 1, 1, 1, 2};
  CHECK(f1_at_50(g, g) == 100.0);
  const std::vector<LabelSegment> pred{{0, 4, 3}}, gt{{2, 8, 3}};  // IoU 2/8
  CHECK(f1_at_50(pred, gt) == 0.0);
  const std::vector<LabelSegment> p2{{0, 4, 3}}, g2{{0, 10, 3}};  // IoU 0.4
  CHECK(f1_at_50(p2, g2) == 0.0);
  CHECK(f1_at_50(std::vector<LabelSegment>{}, gt) == 0.0);
}

TEST_CASE("F1@50 matches exhaustive optimal matching") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(1, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = len(rng);
    const auto p = label_segments(random_stream(rng, n, 3, 6));
    const auto g = label_segments(random_stream(rng, n, 3, 6));
    const double f = f1_at_50(p, g);
    CHECK(f == f1_oracle(p, g));
    auto shuffled = p;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(f1_at_50(shuffled, g) == f);
  }
}

TEST_CASE("classification metrics") {
  auto s = classification_metrics(std::vector<int>{0, 1, 1}, std::vector<int>{0, 0, 1});
  CHECK(s.micro_accuracy == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(s.macro_recall == 75.0);
  s = classification_metrics(std::vector<int>{3, 1}, std::vector<int>{3, 1});
  CHECK(s.micro_accuracy == 100.0);
  CHECK(s.macro_recall == 100.0);
  // Predicted-only classes do not enter the macro mean.
  s = classification_metrics(std::vector<int>{9, 0}, std::vector<int>{0, 0});
  CHECK(s.macro_recall == 50.0);
}

TEST_CASE("classification metrics match a confusion-matrix oracle") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> len(1, 50);
  std::uniform_int_distribution<int> cls(0, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> p(len(rng)), g(p.size());
    for (auto& x : p) x = cls(rng);
    for (auto& x : g) x = cls(rng);
    long conf[5][5] = {};
    for (std::size_t i = 0; i < p.size(); ++i) ++conf[g[i]][p[i]];
    long diag = 0;
    double recall = 0.0;
    int present = 0;
    for (int a = 0; a < 5; ++a) {
      long row = 0;
      for (int b = 0; b < 5; ++b) row += conf[a][b];
      diag += conf[a][a];
      if (row > 0) {
        recall += double(conf[a][a]) / double(row);
        ++present;
      }
    }
    const auto s = classification_metrics(p, g);
    CHECK(s.micro_accuracy == 100.0 * double(diag) / double(p.size()));
    CHECK(s.macro_recall == 100.0 * recall / present);
    CHECK(frame_accuracy(p, g) == s.micro_accuracy);
  }
}

TEST_CASE("metric reports and timelines") {
  const std::vector<std::vector<int>> gt{{0, 0, 1, 1}, {1, 1, 1, 0}};
  const std::vector<std::vector<int>> pred{{0, 0, 1, 1}, {1, 0, 1, 0}};
  const auto seg = evaluate_segmentation(pred, gt, "test");
  CHECK(seg.frame_accuracy == 87.5);
  CHECK(seg.micro_accuracy == seg.frame_accuracy);
  CHECK(seg.edit == doctest::Approx((100.0 + 50.0) / 2));
  const auto cls = evaluate_classification(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}, "train");
  CHECK(cls.micro_accuracy == 75.0);
  CHECK(cls.macro_recall == 75.0);

  const auto dir = std::filesystem::temp_directory_path() / "motioncode_probe_test";
  std::filesystem::create_directories(dir);
  const std::vector<MetricReport> reports{seg, cls};
  write_metric_reports_csv(reports, dir / "m.csv");
  write_metric_reports_json(reports, dir / "m.json");
  write_timeline_csv(gt[1], pred[1], dir / "t.csv");
  CHECK(slurp(dir / "m.csv").rfind("task,split,frame_accuracy,edit,f1_50,micro_accuracy,macro_recall\n"
                                   "segmentation,test,87.5,",
                                   0) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "m.json"));
  REQUIRE(j.size() == 2);
  CHECK(j[1]["task"] == "classification");
  CHECK(j[1]["micro_accuracy"] == 75.0);
  for (const auto& r : j) {
    for (const char* k : {"frame_accuracy", "edit", "f1_50", "micro_accuracy", "macro_recall"}) {
      CHECK(r[k].get<double>() >= 0.0);
      CHECK(r[k].get<double>() <= 100.0);
    }
  }
  CHECK(slurp(dir / "t.csv") == "frame,gt_label,pred_label\n0,1,1\n1,1,0\n2,1,1\n3,0,0\n");
  std::filesystem::remove_all(dir);
}

TEST_CASE("segmentation head convolution matches a direct oracle") {
  std::mt19937_64 rng(14);
  for (std::size_t taps : {1, 5, 501}) {
    auto h = SegmentationHead::zeros(taps, 3, 4);
    for (auto& w : h.weight) w = std::normal_distribution<double>(0, 1)(rng);
    for (auto& b : h.bias) b = std::normal_distribution<double>(0, 1)(rng);
    const FrameMatrix book = random_matrix(5, 3, rng);
    std::vector<int> codes(37);
    for (auto& c : codes) c = std::uniform_int_distribution<int>(0, 4)(rng);
    for (const FrameMatrix& x : {code_features(book, codes), random_matrix(23, 3, rng)}) {
      CHECK((h.logits(x) - naive_logits(h, x)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  CHECK_THROWS_AS(SegmentationHead::zeros(500, 3, 2), InvalidArgument);
  CHECK_THROWS_AS(SegmentationHead::zeros(5, 3, 2).logits(FrameMatrix::Zero(4, 2)), InvalidArgument);
}

TEST_CASE("probe gradients match finite differences") {
  std::mt19937_64 rng(15);
  const FrameMatrix book = random_matrix(4, 3, rng);
  std::vector<ProbeSample> data;
  for (int s = 0; s < 2; ++s) {
    std::vector<int> codes(12), labels(12);
    for (auto& c : codes) c = std::uniform_int_distribution<int>(0, 3)(rng);
    for (auto& l : labels) l = std::uniform_int_distribution<int>(0, 2)(rng);
    data.push_back({code_features(book, codes), labels});
  }
  auto h = SegmentationHead::zeros(5, 3, 3);
  for (auto& w : h.weight) w = 0.3 * std::normal_distribution<double>(0, 1)(rng);
  for (auto& b : h.bias) b = 0.3 * std::normal_distribution<double>(0, 1)(rng);
  SegmentationHead grad;
  segmentation_loss(h, data, &grad);
  const double eps = 1e-5;
  auto fd = [&](std::vector<double>& param, std::size_t i) {
    const double keep = param[i];
    param[i] = keep + eps;
    const double up = segmentation_loss(h, data);
    param[i] = keep - eps;
    const double down = segmentation_loss(h, data);
    param[i] = keep;
    return (up - down) / (2 * eps);
  };
  for (std::size_t i = 0; i < h.weight.size(); ++i) CHECK(grad.weight[i] == doctest::Approx(fd(h.weight, i)).epsilon(1e-6));
  for (std::size_t i = 0; i < h.bias.size(); ++i) CHECK(grad.bias[i] == doctest::Approx(fd(h.bias, i)).epsilon(1e-6));

  std::vector<FrameMatrix> feats{random_matrix(7, 3, rng), random_matrix(4, 3, rng), random_matrix(9, 3, rng)};
  const std::vector<int> labels{0, 2, 1};
  auto c = ClassificationHead::zeros(3, 3);
  for (auto& w : c.weight) w = std::normal_distribution<double>(0, 1)(rng);
  ClassificationHead cg;
  classification_loss(c, feats, labels, &cg);
  auto cfd = [&](std::vector<double>& param, std::size_t i) {
    const double keep = param[i];
    param[i] = keep + eps;
    const double up = classification_loss(c, feats, labels);
    param[i] = keep - eps;
    const double down = classification_loss(c, feats, labels);
    param[i] = keep;
    return (up - down) / (2 * eps);
  };
  for (std::size_t i = 0; i < c.weight.size(); ++i) CHECK(cg.weight[i] == doctest::Approx(cfd(c.weight, i)).epsilon(1e-6));
  for (std::size_t i = 0; i < c.bias.size(); ++i) CHECK(cg.bias[i] == doctest::Approx(cfd(c.bias, i)).epsilon(1e-6));
}

TEST_CASE("separable features are fit perfectly") {
  std::mt19937_64 rng(16);
  const FrameMatrix book = random_matrix(2, 4, rng);
  std::vector<ProbeSample> data;
  std::vector<FrameMatrix> feats;
  std::vector<int> seq_labels;
  for (int s = 0; s < 4; ++s) {
    auto labels = random_stream(rng, 80, 2, 6);
    data.push_back({code_features(book, labels), labels});
    feats.push_back(code_features(book, std::vector<int>(30, s % 2)));
    seq_labels.push_back(s % 2);
  }
  ProbeConfig cfg;
  cfg.taps = 1;
  cfg.epochs = 200;
  cfg.learning_rate = 0.05;
  const auto head = train_segmentation_probe(data, 2, cfg);
  for (const auto& d : data) CHECK(frame_accuracy(head.predict(d.features), d.labels) == 100.0);
  const auto cls = train_classification_probe(feats, seq_labels, 2, cfg);
  for (std::size_t i = 0; i < feats.size(); ++i) CHECK(cls.predict(feats[i]) == seq_labels[i]);
}

TEST_CASE("shuffled labels give chance accuracy on held-out sequences") {
  double total = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::mt19937_64 rng(seed);
    const FrameMatrix book = random_matrix(8, 4, rng);
    auto make = [&]() {
      std::vector<int> codes(400), labels(400);
      for (std::size_t t = 0; t < codes.size(); t += 10) {
        const int c = std::uniform_int_distribution<int>(0, 7)(rng);
        const int l = std::uniform_int_distribution<int>(0, 1)(rng);
        std::fill_n(codes.begin() + long(t), 10, c);
        std::fill_n(labels.begin() + long(t), 10, l);
      }
      return ProbeSample{code_features(book, codes), labels};
    };
    std::vector<ProbeSample> train{make(), make(), make()}, test{make(), make(), make()};
    ProbeConfig cfg;
    cfg.taps = 21;
    cfg.epochs = 150;
    const auto head = train_segmentation_probe(train, 2, cfg);
    std::vector<int> p, g;
    for (const auto& s : test) {
      const auto pred = head.predict(s.features);
      p.insert(p.end(), pred.begin(), pred.end());
      g.insert(g.end(), s.labels.begin(), s.labels.end());
    }
    total += frame_accuracy(p, g);
  }
  CHECK(std::abs(total / 3.0 - 50.0) <= 10.0);
}

TEST_CASE("probe inputs are validated") {
  std::vector<ProbeSample> bad{{FrameMatrix::Zero(4, 2), {0, 1, 0}}};
  CHECK_THROWS_AS(train_segmentation_probe(bad, 2), InvalidArgument);
  std::vector<ProbeSample> out_of_range{{FrameMatrix::Zero(2, 2), {0, 3}}};
  CHECK_THROWS_AS(train_segmentation_probe(out_of_range, 2), InvalidArgument);
  std::vector<FrameMatrix> f{FrameMatrix::Zero(3, 2)};
  CHECK_THROWS_AS(train_classification_probe(f, std::vector<int>{0, 1}, 2), InvalidArgument);
}

TEST_CASE("probing leaves the backbone bitwise unchanged") {
  ModelConfig m;
  m.io_dim = 4;
  m.model_dim = 8;
  m.heads = 2;
  m.ffn_dim = 16;
  m.encoder_layers = 1;
  m.encoder_window = 4;
  m.decoder_layers = 1;
  m.decoder_window = 3;
  m.codebook_size = 6;
  const auto model = MotionCodeModel<float>::init(m, 5);
  auto checksum = [&]() {
    std::vector<std::vector<float>> out;
    for (const auto& p : model.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return out;
  };
  const auto before = checksum();
  std::mt19937_64 rng(17);
  std::vector<ProbeSample> data;
  for (int s = 0; s < 2; ++s) {
    const auto enc = encode_sequence(model, random_matrix(50, 4, rng));
    data.push_back({enc.z_q, random_stream(rng, 50, 3, 4)});
  }
  ProbeConfig cfg;
  cfg.taps = 11;
  cfg.epochs = 20;
  train_segmentation_probe(data, 3, cfg);
  CHECK(checksum() == before);
}
