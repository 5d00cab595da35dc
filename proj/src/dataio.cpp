#include "motioncode/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <iomanip>
#include <sstream>

#include "motioncode/errors.hpp"

namespace motioncode {

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw ValidationError("unknown split '" + text + "' (expected train or test)");
}

void MotionSequence::validate() const {
  if (frame_count() < 2) {
    throw ValidationError("sequence " + sequence_id + " has " + std::to_string(frame_count()) +
                          " frames; at least 2 are required");
  }
  if (labels && labels->size() != frame_count()) {
    throw ValidationError("sequence " + sequence_id + ": label count does not match frame count");
  }
  if (!frames.allFinite()) throw ValidationError("sequence " + sequence_id + " contains non-finite values");
}

// ---- manifest ---------------------------------------------------------------

namespace {

std::string delimiter_name(Delimiter d) {
  switch (d) {
    case Delimiter::Comma: return "comma";
    case Delimiter::Whitespace: return "whitespace";
    case Delimiter::Tab: return "tab";
    case Delimiter::Auto: break;
  }
  return "auto";
}

Delimiter parse_delimiter(const std::string& text) {
  if (text == "auto") return Delimiter::Auto;
  if (text == "comma") return Delimiter::Comma;
  if (text == "whitespace") return Delimiter::Whitespace;
  if (text == "tab") return Delimiter::Tab;
  throw ValidationError("unknown delimiter '" + text + "'");
}

std::size_t parse_index(const std::string& text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ValidationError("invalid column index '" + text + "'");
  }
  return v;
}

std::string format_columns(const std::vector<std::size_t>& columns) {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns.size();) {
    std::size_t j = i;
    while (j + 1 < columns.size() && columns[j + 1] == columns[j] + 1) ++j;
    if (i) out << ", ";
    if (j > i + 1) {
      out << columns[i] << '-' << columns[j];
    } else {
      out << columns[i];
      if (j == i + 1) out << ", " << columns[j];
    }
    i = j + 1;
  }
  return out.str();
}

}  // namespace

std::vector<std::size_t> column_preset(const std::string& name) {
  if (name == "jigsaws14") {
    // Patient-side manipulators: 38-40 position, 41-43 rotation, 56 gripper; 57-59, 60-62, 75.
    return {38, 39, 40, 41, 42, 43, 56, 57, 58, 59, 60, 61, 62, 75};
  }
  if (name == "hugadb36") {
    std::vector<std::size_t> cols(36);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return cols;
  }
  throw ValidationError("unknown column preset '" + name + "'");
}

std::vector<std::size_t> parse_columns(const std::string& text) {
  const auto items = split_list(text);
  if (items.size() == 1 && !items[0].empty() && !std::isdigit(static_cast<unsigned char>(items[0][0]))) {
    return column_preset(items[0]);
  }
  std::vector<std::size_t> cols;
  for (const auto& item : items) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      cols.push_back(parse_index(item));
      continue;
    }
    const std::size_t lo = parse_index(trim(item.substr(0, dash)));
    const std::size_t hi = parse_index(trim(item.substr(dash + 1)));
    if (hi < lo) throw ValidationError("descending column range '" + item + "'");
    for (std::size_t c = lo; c <= hi; ++c) cols.push_back(c);
  }
  if (cols.empty()) throw ValidationError("empty column selection");
  return cols;
}

DatasetManifest DatasetManifest::from_file(const KeyValueFile& file, std::filesystem::path base_dir) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  SectionReader ds(file, file.find("dataset"));
  if (!file.find("dataset")) throw ValidationError(file.source() + ": missing [dataset] section");
  const auto cols = ds.string("columns");
  if (!cols) throw ValidationError(file.source() + ": [dataset] needs 'columns'");
  m.columns = parse_columns(*cols);
  if (ds.has("label_column")) m.label_column = ds.count_or("label_column", 0);
  m.delimiter = parse_delimiter(ds.string_or("delimiter", "auto"));
  m.sample_rate = ds.number_or("sample_rate", 30.0);
  ds.finish();
  SectionReader(file, file.find("")).finish();

  for (const auto* section : file.with_prefix("sequence.")) {
    SectionReader r(file, section);
    ManifestEntry e;
    e.sequence_id = section->name.substr(std::string("sequence.").size());
    const auto path = r.string("path");
    if (!path) throw ValidationError(file.source() + ": [" + section->name + "] needs 'path'");
    e.path = *path;
    e.subject_id = r.string_or("subject", "");
    e.split = parse_split(r.string_or("split", "train"));
    r.finish();
    m.entries.push_back(std::move(e));
  }
  for (const auto& s : file.sections()) {
    if (!s.name.empty() && s.name != "dataset" && s.name.rfind("sequence.", 0) != 0) {
      throw ParseError(file.source(), s.line, "unknown section [" + s.name + "]");
    }
  }
  if (m.entries.empty()) throw ValidationError(file.source() + ": manifest lists no sequences");
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  return from_file(KeyValueFile::load(path), path.parent_path());
}

KeyValueFile DatasetManifest::to_file() const {
  KeyValueFile file;
  auto& ds = file.add_section("dataset");
  ds.entries.push_back({"columns", format_columns(columns), 0});
  if (label_column) ds.entries.push_back({"label_column", std::to_string(*label_column), 0});
  ds.entries.push_back({"delimiter", delimiter_name(delimiter), 0});
  std::ostringstream rate;
  rate << sample_rate;
  ds.entries.push_back({"sample_rate", rate.str(), 0});
  for (const auto& e : entries) {
    auto& s = file.add_section("sequence." + e.sequence_id);
    s.entries.push_back({"path", e.path.generic_string(), 0});
    s.entries.push_back({"subject", e.subject_id, 0});
    s.entries.push_back({"split", to_string(e.split), 0});
  }
  return file;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_file().to_string();
  if (!out) throw IoError("failed writing " + path.string());
}

// ---- sequence tables ----------------------------------------------------------

namespace {

std::vector<std::string_view> split_cells(std::string_view line, Delimiter d) {
  std::vector<std::string_view> cells;
  if (d == Delimiter::Whitespace) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      cells.push_back(line.substr(i, j - i));
      i = j;
    }
    return cells;
  }
  const char sep = d == Delimiter::Comma ? ',' : '\t';
  std::size_t start = 0;
  while (true) {
    const auto at = line.find(sep, start);
    auto cell = line.substr(start, at == std::string_view::npos ? line.npos : at - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    cells.push_back(cell);
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return cells;
}

Delimiter detect_delimiter(std::string_view line) {
  if (line.find(',') != std::string_view::npos) return Delimiter::Comma;
  if (line.find('\t') != std::string_view::npos) {
    // Tab-only separation; mixed runs of blanks fall back to whitespace splitting.
    return line.find(' ') == std::string_view::npos ? Delimiter::Tab : Delimiter::Whitespace;
  }
  return Delimiter::Whitespace;
}

}  // namespace

MotionSequence load_sequence(const std::filesystem::path& path, const DatasetManifest& manifest,
                             const ManifestEntry& entry) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string source = path.string();

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t width = 0;
  std::size_t rows = 0;
  Delimiter delim = manifest.delimiter;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (delim == Delimiter::Auto) delim = detect_delimiter(line);
    const auto cells = split_cells(line, delim);
    if (width == 0) {
      width = cells.size();
    } else if (cells.size() != width) {
      throw ParseError(source, line_no,
                       "ragged row: " + std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
    }
    for (auto c : manifest.columns) {
      if (c >= cells.size()) {
        throw ParseError(source, line_no, "column " + std::to_string(c) + " out of range (row has " +
                                              std::to_string(cells.size()) + " cells)");
      }
      double v = 0;
      auto cell = cells[c];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
        throw ParseError(source, line_no, "non-numeric cell '" + std::string(cell) + "' in column " + std::to_string(c));
      }
      values.push_back(v);
    }
    if (manifest.label_column) {
      const auto lc = *manifest.label_column;
      if (lc >= cells.size()) throw ParseError(source, line_no, "missing label column " + std::to_string(lc));
      double v = 0;
      auto cell = cells[lc];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || v != std::floor(v) || v < 0) {
        throw ParseError(source, line_no, "label cell '" + std::string(cell) + "' is not a class index");
      }
      labels.push_back(static_cast<int>(v));
    }
    ++rows;
  }

  MotionSequence seq;
  seq.sequence_id = entry.sequence_id;
  seq.subject_id = entry.subject_id;
  seq.sample_rate = manifest.sample_rate;
  seq.split = entry.split;
  seq.frames = FrameMatrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(manifest.columns.size()));
  std::copy(values.begin(), values.end(), seq.frames.data());
  if (manifest.label_column) seq.labels = std::move(labels);
  seq.validate();
  return seq;
}

std::vector<MotionSequence> load_dataset(const DatasetManifest& manifest) {
  std::vector<MotionSequence> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const auto path = e.path.is_absolute() ? e.path : manifest.base_dir / e.path;
    out.push_back(load_sequence(path, manifest, e));
    if (out.back().channel_count() != out.front().channel_count()) {
      throw ValidationError("sequence " + e.sequence_id + " has a different channel count");
    }
  }
  return out;
}

// ---- normalization --------------------------------------------------------------

NormalizationStats NormalizationStats::compute(std::span<const MotionSequence> sequences) {
  std::size_t channels = 0;
  std::vector<long double> total;
  std::vector<long double> total_sq;
  std::size_t frames = 0;
  for (const auto& s : sequences) {
    if (s.split != Split::Train) continue;
    if (channels == 0) {
      channels = s.channel_count();
      total.assign(channels, 0);
      total_sq.assign(channels, 0);
    } else if (s.channel_count() != channels) {
      throw InvalidArgument("normalization: inconsistent channel counts");
    }
    for (Eigen::Index r = 0; r < s.frames.rows(); ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        const long double v = s.frames(r, static_cast<Eigen::Index>(c));
        total[c] += v;
        total_sq[c] += v * v;
      }
    }
    frames += s.frame_count();
  }
  if (frames == 0) throw InvalidArgument("normalization: no train-split frames");
  NormalizationStats stats;
  stats.mean.resize(channels);
  stats.stddev.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const long double mu = total[c] / frames;
    const long double var = std::max<long double>(total_sq[c] / frames - mu * mu, 0);
    stats.mean[c] = static_cast<double>(mu);
    double sd = std::sqrt(static_cast<double>(var));
    if (!(sd > 1e-12)) {
      std::cerr << "warning: channel " << c << " is constant on the train split; using unit scale\n";
      sd = 1.0;
    }
    stats.stddev[c] = sd;
  }
  return stats;
}

MotionSequence normalize(const MotionSequence& seq, const NormalizationStats& stats) {
  if (stats.channel_count() != seq.channel_count()) {
    throw InvalidArgument("normalize: stats have " + std::to_string(stats.channel_count()) + " channels, sequence has " +
                          std::to_string(seq.channel_count()));
  }
  MotionSequence out = seq;
  for (Eigen::Index c = 0; c < out.frames.cols(); ++c) {
    out.frames.col(c) = (out.frames.col(c).array() - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

MotionSequence denormalize(const MotionSequence& seq, const NormalizationStats& stats) {
  if (stats.channel_count() != seq.channel_count()) {
    throw InvalidArgument("denormalize: channel-count mismatch");
  }
  MotionSequence out = seq;
  for (Eigen::Index c = 0; c < out.frames.cols(); ++c) {
    out.frames.col(c) = out.frames.col(c).array() * stats.stddev[c] + stats.mean[c];
  }
  return out;
}

// ---- synthetic data -----------------------------------------------------------------

namespace {

Waveform parse_waveform(const std::string& text) {
  if (text == "sine") return Waveform::Sine;
  if (text == "ramp") return Waveform::Ramp;
  if (text == "hold") return Waveform::Hold;
  throw ValidationError("unknown waveform '" + text + "'");
}

ChannelWave wave(Waveform kind, double amplitude, double period = 1.0, double offset = 0.0) {
  return ChannelWave{kind, amplitude, period, offset};
}

double sample_wave(const ChannelWave& w, std::size_t k, std::size_t length, double amplitude_scale) {
  const double a = w.amplitude * amplitude_scale;
  switch (w.kind) {
    case Waveform::Sine:
      return w.offset + a * std::sin(2.0 * M_PI * static_cast<double>(k) / w.period);
    case Waveform::Ramp: {
      const double u = length > 1 ? static_cast<double>(k) / static_cast<double>(length - 1) : 0.0;
      return w.offset + a * (2.0 * u - 1.0);
    }
    case Waveform::Hold:
      break;
  }
  return w.offset + a;
}

}  // namespace

SyntheticConfig SyntheticConfig::default_config() {
  SyntheticConfig c;
  using W = Waveform;
  c.primitives = {
      {"reach", {wave(W::Sine, 1.0, 24), wave(W::Hold, 0.5), wave(W::Hold, 0.0), wave(W::Hold, 0.0)}, 40, 120},
      {"grasp", {wave(W::Hold, 0.0), wave(W::Sine, 1.0, 16), wave(W::Hold, -0.5), wave(W::Hold, 0.0)}, 40, 120},
      {"pull", {wave(W::Ramp, 1.0), wave(W::Hold, 0.0), wave(W::Sine, 0.8, 30), wave(W::Hold, 0.5)}, 40, 120},
      {"release", {wave(W::Hold, -0.5), wave(W::Hold, 0.5), wave(W::Hold, 0.0), wave(W::Sine, 1.0, 12)}, 40, 120},
  };
  c.subjects = {{"A", {0, 1, 2}, 1.0}, {"B", {1, 2, 3}, 1.3}};
  return c;
}

SyntheticConfig SyntheticConfig::from_file(const KeyValueFile& file) {
  SyntheticConfig c = default_config();
  SectionReader r(file, file.find("synth"));
  c.channels = r.count_or("channels", c.channels);
  c.frames_per_sequence = r.count_or("frames", c.frames_per_sequence);
  c.train_sequences = r.count_or("train_sequences", c.train_sequences);
  c.test_sequences = r.count_or("test_sequences", c.test_sequences);
  c.sample_rate = r.number_or("sample_rate", c.sample_rate);
  c.noise = r.number_or("noise", c.noise);
  r.finish();

  const auto prims = file.with_prefix("primitive.");
  if (!prims.empty()) {
    c.primitives.clear();
    for (const auto* s : prims) {
      SectionReader p(file, s);
      MotionPrimitive prim;
      prim.name = s->name.substr(std::string("primitive.").size());
      const auto kinds = p.list("waveforms");
      if (!kinds) throw ValidationError("[" + s->name + "] needs 'waveforms'");
      const auto amps = p.numbers("amplitudes").value_or(std::vector<double>(kinds->size(), 1.0));
      const auto periods = p.numbers("periods").value_or(std::vector<double>(kinds->size(), 20.0));
      const auto offsets = p.numbers("offsets").value_or(std::vector<double>(kinds->size(), 0.0));
      if (amps.size() != kinds->size() || periods.size() != kinds->size() || offsets.size() != kinds->size()) {
        throw ValidationError("[" + s->name + "] per-channel lists must have equal length");
      }
      for (std::size_t i = 0; i < kinds->size(); ++i) {
        prim.channels.push_back(wave(parse_waveform((*kinds)[i]), amps[i], periods[i], offsets[i]));
      }
      const auto dur = p.numbers("duration").value_or(std::vector<double>{40, 120});
      if (dur.size() != 2) throw ValidationError("[" + s->name + "] duration must be 'min, max'");
      prim.min_frames = static_cast<std::size_t>(dur[0]);
      prim.max_frames = static_cast<std::size_t>(dur[1]);
      p.finish();
      c.primitives.push_back(std::move(prim));
    }
  }
  const auto subjects = file.with_prefix("subject.");
  if (!subjects.empty()) {
    c.subjects.clear();
    for (const auto* s : subjects) {
      SectionReader p(file, s);
      SyntheticSubject subj;
      subj.name = s->name.substr(std::string("subject.").size());
      const auto ids = p.numbers("primitives");
      if (!ids) throw ValidationError("[" + s->name + "] needs 'primitives'");
      for (double v : *ids) subj.primitives.push_back(static_cast<std::size_t>(v));
      subj.amplitude_scale = p.number_or("amplitude_scale", 1.0);
      p.finish();
      c.subjects.push_back(std::move(subj));
    }
  }
  c.validate();
  return c;
}

void SyntheticConfig::write(KeyValueFile& file) const {
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  auto join = [&](const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ", ") + p;
    return out;
  };
  auto& s = file.add_section("synth");
  s.entries.push_back({"channels", std::to_string(channels), 0});
  s.entries.push_back({"frames", std::to_string(frames_per_sequence), 0});
  s.entries.push_back({"train_sequences", std::to_string(train_sequences), 0});
  s.entries.push_back({"test_sequences", std::to_string(test_sequences), 0});
  s.entries.push_back({"sample_rate", num(sample_rate), 0});
  s.entries.push_back({"noise", num(noise), 0});
  for (const auto& p : primitives) {
    auto& ps = file.add_section("primitive." + p.name);
    std::vector<std::string> kinds, amps, periods, offsets;
    for (const auto& ch : p.channels) {
      kinds.push_back(ch.kind == Waveform::Sine ? "sine" : ch.kind == Waveform::Ramp ? "ramp" : "hold");
      amps.push_back(num(ch.amplitude));
      periods.push_back(num(ch.period));
      offsets.push_back(num(ch.offset));
    }
    ps.entries.push_back({"waveforms", join(kinds), 0});
    ps.entries.push_back({"amplitudes", join(amps), 0});
    ps.entries.push_back({"periods", join(periods), 0});
    ps.entries.push_back({"offsets", join(offsets), 0});
    ps.entries.push_back({"duration", std::to_string(p.min_frames) + ", " + std::to_string(p.max_frames), 0});
  }
  for (const auto& subj : subjects) {
    auto& ss = file.add_section("subject." + subj.name);
    std::vector<std::string> ids;
    for (auto i : subj.primitives) ids.push_back(std::to_string(i));
    ss.entries.push_back({"primitives", join(ids), 0});
    ss.entries.push_back({"amplitude_scale", num(subj.amplitude_scale), 0});
  }
}

void SyntheticConfig::validate() const {
  if (primitives.empty()) throw ValidationError("synthetic config: primitive set is empty");
  if (subjects.empty()) throw ValidationError("synthetic config: no subjects");
  if (channels == 0) throw ValidationError("synthetic config: channels must be >= 1");
  if (frames_per_sequence < 2) throw ValidationError("synthetic config: sequences need >= 2 frames");
  if (train_sequences + test_sequences == 0) throw ValidationError("synthetic config: no sequences requested");
  if (noise < 0) throw ValidationError("synthetic config: noise must be >= 0");
  for (const auto& p : primitives) {
    if (p.channels.size() != channels) {
      throw ValidationError("primitive " + p.name + " defines " + std::to_string(p.channels.size()) +
                            " channels, expected " + std::to_string(channels));
    }
    if (p.min_frames == 0 || p.max_frames < p.min_frames) {
      throw ValidationError("primitive " + p.name + " has an invalid duration range");
    }
    for (const auto& w : p.channels) {
      if (w.kind == Waveform::Sine && !(w.period > 0)) throw ValidationError("primitive " + p.name + ": period must be > 0");
    }
  }
  for (const auto& s : subjects) {
    if (s.primitives.empty()) throw ValidationError("subject " + s.name + " uses no primitives");
    for (auto id : s.primitives) {
      if (id >= primitives.size()) throw ValidationError("subject " + s.name + " references unknown primitive");
    }
  }
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticDataset out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t total = config.train_sequences + config.test_sequences;
  for (std::size_t i = 0; i < total; ++i) {
    const auto& subject = config.subjects[i % config.subjects.size()];
    MotionSequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "s%03zu", i);
    seq.sequence_id = id;
    seq.subject_id = subject.name;
    seq.sample_rate = config.sample_rate;
    seq.split = i < config.train_sequences ? Split::Train : Split::Test;
    const std::size_t n = config.frames_per_sequence;
    seq.frames = FrameMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.channels));
    std::vector<int> labels(n, 0);

    std::size_t cursor = 0;
    std::size_t previous = config.primitives.size();
    while (cursor < n) {
      std::size_t pick = 0;
      if (subject.primitives.size() == 1) {
        pick = subject.primitives.front();
      } else {
        do {
          pick = subject.primitives[std::uniform_int_distribution<std::size_t>(0, subject.primitives.size() - 1)(rng)];
        } while (pick == previous);
      }
      const auto& prim = config.primitives[pick];
      const std::size_t length =
          std::min(std::uniform_int_distribution<std::size_t>(prim.min_frames, prim.max_frames)(rng), n - cursor);
      for (std::size_t k = 0; k < length; ++k) {
        for (std::size_t c = 0; c < config.channels; ++c) {
          double v = sample_wave(prim.channels[c], k, length, subject.amplitude_scale);
          if (config.noise > 0) v += config.noise * noise(rng);
          seq.frames(static_cast<Eigen::Index>(cursor + k), static_cast<Eigen::Index>(c)) = v;
        }
        labels[cursor + k] = static_cast<int>(pick);
      }
      // Consecutive picks differ unless the subject has a single primitive; merge in that case.
      if (!out.log.empty() && out.log.back().sequence_id == seq.sequence_id && out.log.back().primitive == pick) {
        out.log.back().end = cursor + length;
      } else {
        out.log.push_back(GeneratedSegment{seq.sequence_id, cursor, cursor + length, pick});
      }
      cursor += length;
      previous = pick;
    }
    seq.labels = std::move(labels);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

std::filesystem::path write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (dataset.sequences.empty()) throw InvalidArgument("write_dataset: empty dataset");

  DatasetManifest manifest;
  const std::size_t channels = dataset.sequences.front().channel_count();
  manifest.columns.resize(channels);
  std::iota(manifest.columns.begin(), manifest.columns.end(), std::size_t{0});
  manifest.label_column = channels;
  manifest.delimiter = Delimiter::Whitespace;
  manifest.sample_rate = dataset.sequences.front().sample_rate;

  for (const auto& seq : dataset.sequences) {
    const std::string file = seq.sequence_id + ".txt";
    std::ofstream out(dir / file);
    if (!out) throw IoError("cannot write " + (dir / file).string());
    char buf[64];
    for (std::size_t r = 0; r < seq.frame_count(); ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", seq.frames(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        out << buf << ' ';
      }
      out << (seq.labels ? (*seq.labels)[r] : 0) << '\n';
    }
    if (!out) throw IoError("failed writing " + (dir / file).string());
    manifest.entries.push_back(ManifestEntry{file, seq.sequence_id, seq.subject_id, seq.split});
  }
  const auto manifest_path = dir / "manifest.ini";
  manifest.save(manifest_path);

  std::ofstream gt(dir / "ground_truth.csv");
  if (!gt) throw IoError("cannot write ground_truth.csv");
  gt << "sequence_id,start,end,label\n";
  for (const auto& s : dataset.log) gt << s.sequence_id << ',' << s.start << ',' << s.end << ',' << s.primitive << '\n';
  return manifest_path;
}

}  // namespace motioncode
