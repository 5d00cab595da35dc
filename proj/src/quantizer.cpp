#include "motioncode/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "motioncode/errors.hpp"
#include "motioncode/ops.hpp"

namespace motioncode {

std::vector<std::size_t> all_codes(std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

template <typename T>
std::pair<std::size_t, double> nearest_code(std::span<const T> frame, const Tensor<T>& codebook,
                                            std::span<const std::size_t> allowed) {
  if (allowed.empty()) throw InvalidArgument("nearest_code: allowed code set is empty");
  if (codebook.rank() != 2 || codebook.dim(1) != frame.size()) {
    throw InvalidArgument("nearest_code: frame width does not match codebook " + shape_string(codebook.dims()));
  }
  const std::size_t d = frame.size();
  const auto rows = codebook.values();
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k : allowed) {
    if (k >= codebook.dim(0)) throw InvalidArgument("nearest_code: code " + std::to_string(k) + " out of range");
    double dist = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = static_cast<double>(frame[i]) - static_cast<double>(rows[k * d + i]);
      dist += diff * diff;
    }
    if (dist < best_dist || (dist == best_dist && k < best)) {
      best = k;
      best_dist = dist;
    }
  }
  if (best == std::numeric_limits<std::size_t>::max()) throw NumericalError("nearest_code: non-finite distances");
  return {best, best_dist};
}

template <typename T>
std::vector<std::size_t> assign_codes(const Tensor<T>& z_e, const Tensor<T>& codebook,
                                      std::span<const std::size_t> allowed) {
  if (z_e.rank() != 2) throw InvalidArgument("assign_codes: z_e must be frames x D");
  const std::size_t n = z_e.dim(0), d = z_e.dim(1);
  std::vector<std::size_t> codes(n);
  const auto v = z_e.values();
  for (std::size_t t = 0; t < n; ++t) codes[t] = nearest_code<T>(v.subspan(t * d, d), codebook, allowed).first;
  return codes;
}

std::vector<Segment> run_length(std::span<const std::size_t> codes) {
  std::vector<Segment> out;
  for (std::size_t t = 0; t < codes.size(); ++t) {
    if (out.empty() || out.back().code != codes[t]) {
      out.push_back({t, t + 1, codes[t]});
    } else {
      out.back().end = t + 1;
    }
  }
  return out;
}

std::vector<std::size_t> expand_segments(std::span<const Segment> segments) {
  std::vector<std::size_t> codes;
  for (const auto& s : segments) codes.insert(codes.end(), s.length(), s.code);
  return codes;
}

template <typename T>
Tensor<T> straight_through_both(Tape<T>& tape, const Tensor<T>& encoded, const Tensor<T>& quantized) {
  return ops::add(tape, quantized, ops::sub(tape, encoded, ops::detach(encoded)));
}

template <typename T>
CodeAssignment<T> quantize(Tape<T>& tape, const Tensor<T>& z_e, const Tensor<T>& codebook,
                           std::span<const std::size_t> allowed) {
  for (T v : z_e.values()) {
    if (!std::isfinite(v)) throw NumericalError("quantize: z_e contains non-finite values");
  }
  CodeAssignment<T> out;
  out.codes = assign_codes(z_e, codebook, allowed);
  out.segments = run_length(out.codes);
  out.z_q = ops::gather_rows(tape, codebook, std::span<const std::size_t>(out.codes));
  out.z_q_st = ops::add(tape, ops::detach(out.z_q), ops::sub(tape, z_e, ops::detach(z_e)));
  std::vector<ops::RowRange> ranges;
  ranges.reserve(out.segments.size());
  for (const auto& s : out.segments) ranges.push_back({s.start, s.end});
  out.z_bar = ops::range_mean(tape, z_e, std::span<const ops::RowRange>(ranges));
  return out;
}

template <typename T>
void validate_codebook(const Tensor<T>& codebook) {
  if (codebook.rank() != 2 || codebook.dim(0) == 0) throw ValidationError("codebook must be a non-empty K x D matrix");
  const std::size_t k = codebook.dim(0), d = codebook.dim(1);
  const auto v = codebook.values();
  for (T x : v) {
    if (!std::isfinite(x)) throw ValidationError("codebook contains non-finite entries");
  }
  std::set<std::vector<T>> seen;
  for (std::size_t i = 0; i < k; ++i) {
    if (!seen.emplace(v.begin() + static_cast<std::ptrdiff_t>(i * d), v.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)).second) {
      throw ValidationError("codebook rows are not distinct (row " + std::to_string(i) + ")");
    }
  }
}

template <typename T>
Tensor<T> init_codebook(const Tensor<T>& samples, std::size_t count, std::mt19937_64& rng) {
  if (samples.rank() != 2 || samples.dim(0) == 0) throw InvalidArgument("init_codebook: need a non-empty sample matrix");
  if (count == 0) throw InvalidArgument("init_codebook: codebook size must be >= 1");
  const std::size_t n = samples.dim(0), d = samples.dim(1);
  const auto src = samples.values();

  std::vector<std::size_t> picks;
  if (count <= n) {
    picks = all_codes(n);
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(count);
  } else {
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    for (std::size_t i = 0; i < count; ++i) picks.push_back(any(rng));
  }

  double spread = 0.0;
  for (T x : src) spread = std::max(spread, std::abs(static_cast<double>(x)));
  std::normal_distribution<double> jitter(0.0, 1e-3 * std::max(spread, 1.0));

  std::vector<T> rows(count * d);
  std::set<std::vector<T>> seen;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<T> row(src.begin() + static_cast<std::ptrdiff_t>(picks[i] * d),
                       src.begin() + static_cast<std::ptrdiff_t>((picks[i] + 1) * d));
    while (!seen.insert(row).second) {
      for (auto& x : row) x = static_cast<T>(static_cast<double>(x) + jitter(rng));
    }
    std::copy(row.begin(), row.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto out = Tensor<T>::from({count, d}, std::move(rows), true);
  validate_codebook(out);
  return out;
}

// ---- restriction ------------------------------------------------------------

std::vector<std::size_t> RestrictionPlan::allowed(std::size_t sequence) const {
  if (all_allowed) return all_codes(codebook_size);
  if (sequence >= choice.size()) throw InvalidArgument("restriction plan has no entry for sequence " + std::to_string(sequence));
  return subsets[choice[sequence]];
}

RestrictionPlan unrestricted_plan(std::size_t codebook_size, std::size_t sequences) {
  RestrictionPlan plan;
  plan.all_allowed = true;
  plan.codebook_size = codebook_size;
  plan.choice.assign(sequences, 0);
  return plan;
}

RestrictionPlan build_restriction(const RestrictionConfig& config, std::span<const std::set<std::size_t>> usage,
                                  std::size_t codebook_size, std::uint64_t seed) {
  const std::size_t j = usage.size();
  if (!config.enabled) return unrestricted_plan(codebook_size, j);
  if (j == 0) throw InvalidArgument("build_restriction: no sequences");
  std::set<std::size_t> used;
  for (const auto& s : usage) used.insert(s.begin(), s.end());
  if (used.empty()) throw InvalidArgument("build_restriction: previous epoch used no codes");
  for (std::size_t c : used) {
    if (c >= codebook_size) throw InvalidArgument("build_restriction: code " + std::to_string(c) + " out of range");
  }

  const std::size_t group = std::clamp<std::size_t>(config.group_size == 0 ? (j + 3) / 4 : config.group_size, 1, j);
  std::mt19937_64 rng(seed);
  auto order = all_codes(j);
  std::shuffle(order.begin(), order.end(), rng);

  RestrictionPlan plan;
  plan.all_allowed = false;
  plan.codebook_size = codebook_size;
  for (std::size_t g = 0; g < j; ++g) {
    std::set<std::size_t> subset;
    for (std::size_t i = 0; i < group; ++i) {
      const auto& s = usage[order[(g * group + i) % j]];
      subset.insert(s.begin(), s.end());
    }
    if (subset.empty()) subset = used;
    plan.subsets.emplace_back(subset.begin(), subset.end());
  }
  // Identical groups arise when group == j; keep one copy of each.
  std::sort(plan.subsets.begin(), plan.subsets.end());
  plan.subsets.erase(std::unique(plan.subsets.begin(), plan.subsets.end()), plan.subsets.end());

  std::uniform_int_distribution<std::size_t> pick(0, plan.subsets.size() - 1);
  for (std::size_t s = 0; s < j; ++s) plan.choice.push_back(pick(rng));
  return plan;
}

// ---- usage statistics --------------------------------------------------------

CodeUsage code_usage(std::span<const std::vector<std::size_t>> codes) {
  CodeUsage usage;
  for (const auto& seq : codes) {
    CodeHistogram h;
    for (std::size_t c : seq) {
      ++h[c];
      ++usage.global[c];
    }
    usage.per_sequence.push_back(std::move(h));
  }
  return usage;
}

std::set<std::size_t> code_set(const CodeHistogram& histogram) {
  std::set<std::size_t> s;
  for (const auto& [code, count] : histogram) {
    if (count > 0) s.insert(code);
  }
  return s;
}

double jaccard(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const std::size_t uni = a.size() + b.size() - inter.size();
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

double usage_entropy(const CodeHistogram& histogram) {
  double total = 0.0;
  for (const auto& [code, count] : histogram) total += static_cast<double>(count);
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (const auto& [code, count] : histogram) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / total;
    h -= p * std::log2(p);
  }
  return h;
}

std::map<std::string, std::set<std::size_t>> codes_by_subject(std::span<const std::vector<std::size_t>> codes,
                                                              std::span<const std::string> subjects) {
  if (codes.size() != subjects.size()) throw InvalidArgument("codes_by_subject: one subject per sequence required");
  std::map<std::string, std::set<std::size_t>> out;
  for (std::size_t i = 0; i < codes.size(); ++i) out[subjects[i]].insert(codes[i].begin(), codes[i].end());
  return out;
}

double mean_segment_length(std::span<const std::vector<std::size_t>> codes) {
  std::size_t frames = 0, segments = 0;
  for (const auto& seq : codes) {
    frames += seq.size();
    segments += run_length(seq).size();
  }
  return segments == 0 ? 0.0 : static_cast<double>(frames) / static_cast<double>(segments);
}

void write_codes_csv(const std::filesystem::path& path, std::span<const std::size_t> codes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frame,code\n";
  for (std::size_t t = 0; t < codes.size(); ++t) out << t << ',' << codes[t] << '\n';
}

std::vector<std::size_t> read_codes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::vector<std::size_t> codes;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("frame", 0) == 0) continue;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t frame = 0, code = 0;
    char comma = 0;
    if (!(row >> frame >> comma >> code) || comma != ',' || frame != codes.size()) {
      throw ParseError(path.string(), line_no, "expected frame,code with consecutive frames");
    }
    codes.push_back(code);
  }
  return codes;
}

#define MOTIONCODE_INSTANTIATE_QUANTIZER(T)                                                                        \
  template std::pair<std::size_t, double> nearest_code(std::span<const T>, const Tensor<T>&,                       \
                                                       std::span<const std::size_t>);                              \
  template std::vector<std::size_t> assign_codes(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>); \
  template CodeAssignment<T> quantize(Tape<T>&, const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>); \
  template Tensor<T> straight_through_both(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> init_codebook(const Tensor<T>&, std::size_t, std::mt19937_64&);                             \
  template void validate_codebook(const Tensor<T>&);

MOTIONCODE_INSTANTIATE_QUANTIZER(float)
MOTIONCODE_INSTANTIATE_QUANTIZER(double)

#undef MOTIONCODE_INSTANTIATE_QUANTIZER

}  // namespace motioncode
