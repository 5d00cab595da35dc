#include "motioncode/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "motioncode/checkpoint.hpp"
#include "motioncode/errors.hpp"

#ifndef MOTIONCODE_VERSION
#define MOTIONCODE_VERSION "unknown"
#endif

namespace motioncode {

namespace fs = std::filesystem;
using nlohmann::json;

ProbeTask parse_probe_task(const std::string& name) {
  if (name == "segmentation") return ProbeTask::Segmentation;
  if (name == "classification") return ProbeTask::Classification;
  throw InvalidArgument("unknown probe task '" + name + "' (expected segmentation or classification)");
}

std::string to_string(ProbeTask task) {
  return task == ProbeTask::Segmentation ? "segmentation" : "classification";
}

// ---- configuration ----

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

bool known_section(const std::string& name) {
  static const std::set<std::string> plain{"run", "synth", "model", "train", "loss", "analysis", "probe"};
  return plain.count(name) || name.rfind("primitive.", 0) == 0 || name.rfind("subject.", 0) == 0;
}

}  // namespace

RunConfig RunConfig::from_file(const KeyValueFile& file) {
  for (const auto& s : file.sections()) {
    if (s.name.empty()) {
      if (!s.entries.empty()) throw ParseError(file.source(), s.entries.front().line, "key outside any section");
      continue;
    }
    if (!known_section(s.name)) throw ParseError(file.source(), s.line, "unknown section [" + s.name + "]");
  }
  if (const auto* t = file.find("train")) {
    if (const auto* e = t->find("seed")) throw ParseError(file.source(), e->line, "set the seed in [run], not [train]");
  }
  RunConfig c;
  SectionReader run(file, file.find("run"));
  c.seed = static_cast<std::uint64_t>(run.count_or("seed", 0));
  c.threads = run.count_or("threads", c.threads);
  c.task = parse_probe_task(run.string_or("task", to_string(c.task)));
  run.finish();

  c.synth = SyntheticConfig::from_file(file);
  c.model = ModelConfig::from_file(file);
  c.train = TrainConfig::from_file(file);

  SectionReader a(file, file.find("analysis"));
  c.analysis.keyframes.source = parse_keyframe_source(a.string_or("keyframe_source", "layer_sum"));
  c.analysis.keyframes.layer = a.count_or("keyframe_layer", c.analysis.keyframes.layer);
  c.analysis.keyframes.threshold = a.count_or("keyframe_threshold", c.analysis.keyframes.threshold);
  c.analysis.layout_iterations = a.count_or("layout_iterations", c.analysis.layout_iterations);
  a.finish();

  SectionReader p(file, file.find("probe"));
  c.probe.epochs = p.count_or("epochs", c.probe.epochs);
  c.probe.learning_rate = p.number_or("learning_rate", c.probe.learning_rate);
  c.probe.taps = p.count_or("taps", c.probe.taps);
  p.finish();

  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return from_file(KeyValueFile::load(path)); }

KeyValueFile RunConfig::to_file() const {
  KeyValueFile f;
  auto& run = f.add_section("run");
  run.entries.push_back({"seed", std::to_string(seed), 0});
  run.entries.push_back({"threads", std::to_string(threads), 0});
  run.entries.push_back({"task", to_string(task), 0});
  synth.write(f);
  model.write(f);
  KeyValueFile train_file;
  train.write(train_file);
  for (const auto& s : train_file.sections()) {
    auto& dst = f.add_section(s.name);
    for (const auto& e : s.entries) {
      if (!(s.name == "train" && e.key == "seed")) dst.entries.push_back(e);
    }
  }
  auto& a = f.add_section("analysis");
  a.entries.push_back({"keyframe_source", to_string(analysis.keyframes.source), 0});
  a.entries.push_back({"keyframe_layer", std::to_string(analysis.keyframes.layer), 0});
  a.entries.push_back({"keyframe_threshold", std::to_string(analysis.keyframes.threshold), 0});
  a.entries.push_back({"layout_iterations", std::to_string(analysis.layout_iterations), 0});
  auto& p = f.add_section("probe");
  p.entries.push_back({"epochs", std::to_string(probe.epochs), 0});
  p.entries.push_back({"learning_rate", fmt(probe.learning_rate), 0});
  p.entries.push_back({"taps", std::to_string(probe.taps), 0});
  return f;
}

void RunConfig::validate() const {
  if (threads == 0) throw ValidationError("threads must be at least 1");
  synth.validate();
  model.validate();
  train.validate(model);
  train.loss.validate();
  if (probe.taps % 2 == 0) throw ValidationError("probe taps must be odd, got " + std::to_string(probe.taps));
  if (probe.epochs == 0) throw ValidationError("probe epochs must be positive");
  if (!(probe.learning_rate > 0)) throw ValidationError("probe learning_rate must be positive");
  if (analysis.keyframes.source == KeyframeSource::Layer && analysis.keyframes.layer >= model.decoder_layers) {
    throw ValidationError("keyframe_layer " + std::to_string(analysis.keyframes.layer) + " exceeds the " +
                          std::to_string(model.decoder_layers) + " decoder layers");
  }
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_file().to_string()); }

// ---- hashing and manifests ----

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h = fnv1a64(std::string_view(buf, std::size_t(in.gcount())), h);
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void RunManifest::write(const fs::path& out_dir) const {
  json j;
  j["command"] = command;
  j["code_version"] = MOTIONCODE_VERSION;
  j["config_hash"] = hex64(config_hash);
  j["seed"] = seed;
  auto list = [&](const std::vector<fs::path>& paths, const fs::path& base) {
    auto arr = json::array();
    for (const auto& p : paths) {
      const auto full = base.empty() ? p : base / p;
      arr.push_back({{"path", p.generic_string()}, {"fnv1a64", hex64(hash_file(full))}});
    }
    return arr;
  };
  j["inputs"] = list(inputs, {});
  j["outputs"] = list(outputs, out_dir);
  std::ofstream out(out_dir / "run_manifest.json");
  if (!out) throw IoError("cannot write " + (out_dir / "run_manifest.json").string());
  out << j.dump(2) << '\n';
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> dataset_inputs(const fs::path& manifest_path, const DatasetManifest& manifest) {
  std::vector<fs::path> out{manifest_path};
  for (const auto& e : manifest.entries) out.push_back(e.path.is_absolute() ? e.path : manifest.base_dir / e.path);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void finish_run(const std::string& command, const RunConfig& config, std::vector<fs::path> inputs,
                const fs::path& out_dir) {
  write_text(out_dir / "config.ini", config.to_file().to_string());
  RunManifest m{command, config.hash(), config.seed, std::move(inputs), files_under(out_dir)};
  m.write(out_dir);
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(threads, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RunConfig effective(const RunConfig& config) {
  RunConfig c = config;
  c.train.seed = c.seed;
  return c;
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return out;
}

}  // namespace

// ---- commands ----

fs::path cmd_synth(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  make_dir(out_dir);
  const auto manifest = write_dataset(generate_synthetic(config.synth, config.seed), out_dir);
  finish_run("synth", config, {}, out_dir);
  return manifest;
}

TrainResult cmd_train(const RunConfig& config, const fs::path& manifest_path, const fs::path& out_dir) {
  const RunConfig c = effective(config);
  c.validate();
  const auto manifest = DatasetManifest::load(manifest_path);
  const auto data = load_dataset(manifest);
  const auto stats = NormalizationStats::compute(data);
  std::vector<MotionSequence> train;
  for (const auto& s : data) {
    if (s.split == Split::Train) train.push_back(normalize(s, stats));
  }
  if (train.empty()) throw ValidationError(manifest_path.string() + " has no train-split sequences");
  ModelConfig model = c.model;
  model.io_dim = train.front().channel_count();
  make_dir(out_dir);

  Trainer<float> trainer(model, c.train, std::move(train), stats);
  trainer.train();
  TrainResult result{out_dir / "checkpoint.mocd", trainer.log()};
  save_checkpoint(trainer.state(), result.checkpoint);
  trainer.log().write_steps_csv(out_dir / "train_steps.csv");
  trainer.log().write_epochs_csv(out_dir / "train_epochs.csv");
  finish_run("train", c, dataset_inputs(manifest_path, manifest), out_dir);
  return result;
}

EncodedDataset encode_dataset(const TrainingState<float>& state, const DatasetManifest& manifest,
                              std::size_t threads) {
  EncodedDataset out;
  const auto raw = load_dataset(manifest);
  for (const auto& s : raw) {
    if (s.channel_count() != state.normalization.channel_count()) {
      throw ValidationError("sequence " + s.sequence_id + " has " + std::to_string(s.channel_count()) +
                            " channels but the checkpoint was trained on " +
                            std::to_string(state.normalization.channel_count()));
    }
    out.sequences.push_back(normalize(s, state.normalization));
  }
  out.encodings.resize(out.sequences.size());
  parallel_for(out.sequences.size(), threads,
               [&](std::size_t i) { out.encodings[i] = encode_sequence(state.model, out.sequences[i].frames); });
  return out;
}

void cmd_encode(const RunConfig& config, const fs::path& checkpoint, const fs::path& manifest_path,
                const fs::path& out_dir) {
  config.validate();
  const auto state = load_checkpoint<float>(checkpoint);
  const auto manifest = DatasetManifest::load(manifest_path);
  const auto data = encode_dataset(state, manifest, config.threads);
  make_dir(out_dir / "codes");

  std::vector<std::vector<std::size_t>> codes;
  std::vector<std::string> subjects;
  json seqs = json::array();
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const auto& s = data.sequences[i];
    const auto& e = data.encodings[i];
    write_codes_csv(out_dir / "codes" / (safe_name(s.sequence_id) + ".csv"), e.codes);
    codes.push_back(e.codes);
    subjects.push_back(s.subject_id);
    const std::vector<std::vector<std::size_t>> one{e.codes};
    seqs.push_back({{"sequence", s.sequence_id},
                    {"subject", s.subject_id},
                    {"split", to_string(s.split)},
                    {"codes_used", code_set(code_usage(one).global).size()},
                    {"segments", e.segments.size()},
                    {"mean_segment_length", mean_segment_length(one)}});
  }
  const auto usage = code_usage(codes);
  const auto by_subject = codes_by_subject(codes, subjects);
  json subj = json::object();
  for (const auto& [name, set] : by_subject) subj[name] = set;
  json pairs = json::array();
  for (auto a = by_subject.begin(); a != by_subject.end(); ++a) {
    for (auto b = std::next(a); b != by_subject.end(); ++b) {
      pairs.push_back({{"a", a->first}, {"b", b->first}, {"jaccard", jaccard(a->second, b->second)}});
    }
  }
  json j{{"sequences", seqs},
         {"codes_used", code_set(usage.global).size()},
         {"entropy_bits", usage_entropy(usage.global)},
         {"mean_segment_length", mean_segment_length(codes)},
         {"subject_codes", subj},
         {"subject_jaccard", pairs}};
  write_text(out_dir / "code_usage.json", j.dump(2) + "\n");
  auto inputs = dataset_inputs(manifest_path, manifest);
  inputs.insert(inputs.begin(), checkpoint);
  finish_run("encode", config, std::move(inputs), out_dir);
}

AnalysisSummary cmd_analyze(const RunConfig& config, const fs::path& checkpoint, const fs::path& manifest_path,
                            const fs::path& out_dir) {
  config.validate();
  const auto state = load_checkpoint<float>(checkpoint);
  const auto manifest = DatasetManifest::load(manifest_path);
  const auto data = encode_dataset(state, manifest, config.threads);
  for (const char* sub : {"keyframes", "weights", "graphs"}) make_dir(out_dir / sub);

  const std::size_t n = data.sequences.size();
  std::vector<KeyframeSet> keyframes(n);
  std::vector<std::vector<double>> sums(n);
  parallel_for(n, config.threads, [&](std::size_t i) {
    const auto& e = data.encodings[i];
    keyframes[i] = extract_keyframes(e.decoder_attention, e.codes, config.analysis.keyframes);
    sums[i] = weight_sums(e.decoder_attention);
  });

  AnalysisSummary summary;
  TransitionGraph all;
  std::map<std::string, TransitionGraph> per_subject;
  std::map<std::string, std::set<std::size_t>> label_codes;
  json seqs = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.sequences[i];
    const auto name = safe_name(s.sequence_id);
    write_keyframes_csv(keyframes[i], out_dir / "keyframes" / (name + ".csv"));
    write_weight_sums_csv(sums[i], out_dir / "weights" / (name + ".csv"));
    const auto g = transitions(keyframes[i]);
    all.merge(g);
    per_subject[s.subject_id].merge(g);
    if (s.labels) {
      for (std::size_t k = 0; k < keyframes[i].frames.size(); ++k) {
        label_codes["label " + std::to_string((*s.labels)[keyframes[i].frames[k]])].insert(keyframes[i].codes[k]);
      }
    }
    summary.sequences.push_back(s.sequence_id);
    summary.keyframes.push_back(keyframes[i].frames.size());
    summary.total_keyframes += keyframes[i].frames.size();
    seqs.push_back({{"sequence", s.sequence_id}, {"subject", s.subject_id}, {"keyframes", keyframes[i].frames.size()},
                    {"graph_nodes", g.nodes.size()}, {"graph_edges", g.edges.size()}});
  }

  const LayoutOptions layout_opts{config.analysis.layout_iterations, config.seed};
  auto emit = [&](TransitionGraph& g, const std::string& stem, ExportOptions opts) {
    layout(g, layout_opts);
    export_graph(g, GraphFormat::Dot, out_dir / "graphs" / (stem + ".dot"), opts);
    export_graph(g, GraphFormat::Json, out_dir / "graphs" / (stem + ".json"), opts);
  };
  ExportOptions all_opts;
  all_opts.highlights = label_codes;
  emit(all, "all", all_opts);
  json subjects = json::object();
  for (auto& [name, g] : per_subject) {
    ExportOptions o;
    o.name = "subject_" + name;
    emit(g, "subject_" + safe_name(name), o);
    subjects[name] = {{"graph_nodes", g.nodes.size()}, {"graph_edges", g.edges.size()}};
  }
  summary.graph_nodes = all.nodes.size();
  summary.graph_edges = all.edges.size();

  json j{{"decoder_window", state.model.decoder.stack.window()},
         {"keyframe_source", to_string(config.analysis.keyframes.source)},
         {"sequences", seqs},
         {"total_keyframes", summary.total_keyframes},
         {"graph_nodes", summary.graph_nodes},
         {"graph_edges", summary.graph_edges},
         {"subjects", subjects}};
  write_text(out_dir / "analysis_summary.json", j.dump(2) + "\n");
  auto inputs = dataset_inputs(manifest_path, manifest);
  inputs.insert(inputs.begin(), checkpoint);
  finish_run("analyze", config, std::move(inputs), out_dir);
  return summary;
}

std::vector<MetricReport> cmd_probe(const RunConfig& config, const fs::path& checkpoint,
                                    const fs::path& manifest_path, const fs::path& out_dir) {
  config.validate();
  const auto state = load_checkpoint<float>(checkpoint);
  const auto manifest = DatasetManifest::load(manifest_path);
  const auto data = encode_dataset(state, manifest, config.threads);
  make_dir(out_dir / "timelines");

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    (data.sequences[i].split == Split::Train ? train_idx : test_idx).push_back(i);
  }
  if (train_idx.empty()) throw ValidationError(manifest_path.string() + " has no train-split sequences");

  std::vector<MetricReport> reports;
  std::vector<StoredTensor> head_tensors;
  auto to_floats = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };

  if (config.task == ProbeTask::Segmentation) {
    int classes = 0;
    for (const auto& s : data.sequences) {
      if (!s.labels) {
        throw ValidationError("segmentation probe needs per-frame labels; " + s.sequence_id + " has none");
      }
      for (int l : *s.labels) classes = std::max(classes, l + 1);
    }
    std::vector<ProbeSample> train;
    for (auto i : train_idx) train.push_back({data.encodings[i].z_q, *data.sequences[i].labels});
    const auto head = train_segmentation_probe(train, static_cast<std::size_t>(classes), config.probe);
    auto evaluate = [&](const std::vector<std::size_t>& idx, const std::string& split) {
      std::vector<std::vector<int>> pred, gt;
      for (auto i : idx) {
        pred.push_back(head.predict(data.encodings[i].z_q));
        gt.push_back(*data.sequences[i].labels);
        write_timeline_csv(gt.back(), pred.back(),
                           out_dir / "timelines" / (safe_name(data.sequences[i].sequence_id) + ".csv"));
      }
      reports.push_back(evaluate_segmentation(pred, gt, split));
    };
    evaluate(train_idx, "train");
    if (!test_idx.empty()) evaluate(test_idx, "test");
    head_tensors.push_back({"segmentation.weight", {head.taps, head.dim, head.classes}, to_floats(head.weight)});
    head_tensors.push_back({"segmentation.bias", {head.classes}, to_floats(head.bias)});
  } else {
    std::map<std::string, int> subject_ids;
    for (const auto& s : data.sequences) subject_ids.emplace(s.subject_id, 0);
    int next = 0;
    for (auto& [name, id] : subject_ids) id = next++;
    std::vector<FrameMatrix> feats;
    std::vector<int> labels;
    for (auto i : train_idx) {
      feats.push_back(data.encodings[i].z_q);
      labels.push_back(subject_ids.at(data.sequences[i].subject_id));
    }
    const auto head = train_classification_probe(feats, labels, subject_ids.size(), config.probe);
    auto evaluate = [&](const std::vector<std::size_t>& idx, const std::string& split) {
      std::vector<int> pred, gt;
      for (auto i : idx) {
        pred.push_back(head.predict(data.encodings[i].z_q));
        gt.push_back(subject_ids.at(data.sequences[i].subject_id));
      }
      reports.push_back(evaluate_classification(pred, gt, split));
    };
    evaluate(train_idx, "train");
    if (!test_idx.empty()) evaluate(test_idx, "test");
    head_tensors.push_back({"classification.weight", {head.dim, head.classes}, to_floats(head.weight)});
    head_tensors.push_back({"classification.bias", {head.classes}, to_floats(head.bias)});
    json classes = json::object();
    for (const auto& [name, id] : subject_ids) classes[name] = id;
    write_text(out_dir / "classes.json", classes.dump(2) + "\n");
  }
  write_tensor_file(out_dir / "probe_head.mocd", head_tensors);
  write_metric_reports_csv(reports, out_dir / "metrics.csv");
  write_metric_reports_json(reports, out_dir / "metrics.json");
  auto inputs = dataset_inputs(manifest_path, manifest);
  inputs.insert(inputs.begin(), checkpoint);
  finish_run("probe", config, std::move(inputs), out_dir);
  return reports;
}

std::string cmd_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw IoError("no run directory at " + run_dir.string());
  auto read_json = [](const fs::path& p) {
    std::ifstream in(p);
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  };
  json report{{"commands", json::array()}, {"metrics", json::array()}, {"analysis", json::array()},
              {"code_usage", json::array()}, {"training", json::array()}};
  std::ostringstream text;
  std::vector<fs::path> manifests;
  for (const auto& e : fs::recursive_directory_iterator(run_dir)) {
    if (e.is_regular_file() && e.path().filename() == "run_manifest.json") manifests.push_back(e.path());
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw ValidationError("no run_manifest.json under " + run_dir.string());
  for (const auto& m : manifests) {
    const auto dir = m.parent_path();
    const auto rel = fs::relative(dir, run_dir).generic_string();
    const auto manifest = read_json(m);
    const std::string command = manifest.at("command");
    report["commands"].push_back({{"dir", rel}, {"command", command}, {"config_hash", manifest.at("config_hash")}});
    text << command << " (" << rel << ")\n";
    if (fs::exists(dir / "metrics.json")) {
      for (auto r : read_json(dir / "metrics.json")) {
        r["dir"] = rel;
        text << "  " << r["task"].get<std::string>() << "/" << r["split"].get<std::string>() << ": frame acc "
             << fmt(r["frame_accuracy"].get<double>()) << ", edit " << fmt(r["edit"].get<double>()) << ", F1@50 "
             << fmt(r["f1_50"].get<double>()) << ", micro " << fmt(r["micro_accuracy"].get<double>())
             << ", macro recall " << fmt(r["macro_recall"].get<double>()) << "\n";
        report["metrics"].push_back(r);
      }
    }
    if (fs::exists(dir / "analysis_summary.json")) {
      auto a = read_json(dir / "analysis_summary.json");
      text << "  keyframes " << a["total_keyframes"] << ", graph nodes " << a["graph_nodes"] << ", edges "
           << a["graph_edges"] << "\n";
      a["dir"] = rel;
      report["analysis"].push_back(a);
    }
    if (fs::exists(dir / "code_usage.json")) {
      auto u = read_json(dir / "code_usage.json");
      text << "  codes used " << u["codes_used"] << ", mean segment length "
           << fmt(u["mean_segment_length"].get<double>()) << "\n";
      report["code_usage"].push_back({{"dir", rel},
                                      {"codes_used", u["codes_used"]},
                                      {"entropy_bits", u["entropy_bits"]},
                                      {"mean_segment_length", u["mean_segment_length"]},
                                      {"subject_jaccard", u["subject_jaccard"]}});
    }
    if (fs::exists(dir / "train_steps.csv")) {
      std::ifstream in(dir / "train_steps.csv");
      std::string line, last;
      while (std::getline(in, line)) last = line;
      report["training"].push_back({{"dir", rel}, {"last_step", last}});
      text << "  last step: " << last << "\n";
    }
  }
  write_text(run_dir / "report.json", report.dump(2) + "\n");
  return text.str();
}

}  // namespace motioncode
