#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "motioncode/tensor.hpp"

namespace motioncode {

struct Segment {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::size_t code = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

/// 0, 1, ..., count - 1.
std::vector<std::size_t> all_codes(std::size_t count);

/// Nearest allowed codebook row to `frame` by squared Euclidean distance.
/// Ties go to the lowest index. Returns (index, distance²).
template <typename T>
std::pair<std::size_t, double> nearest_code(std::span<const T> frame, const Tensor<T>& codebook,
                                            std::span<const std::size_t> allowed);

/// Per-frame nearest codes of z_e[n_f x D].
template <typename T>
std::vector<std::size_t> assign_codes(const Tensor<T>& z_e, const Tensor<T>& codebook,
                                      std::span<const std::size_t> allowed);

/// Maximal runs of equal codes.
std::vector<Segment> run_length(std::span<const std::size_t> codes);
std::vector<std::size_t> expand_segments(std::span<const Segment> segments);

template <typename T>
struct CodeAssignment {
  std::vector<std::size_t> codes;
  std::vector<Segment> segments;
  Tensor<T> z_q;     // codebook rows; gradients reach the codebook only
  Tensor<T> z_q_st;  // value of z_q, gradient copied to z_e unchanged
  Tensor<T> z_bar;   // segment means of z_e broadcast back to frames
};

/// Quantizes z_e against the allowed codes and builds the three latent streams.
template <typename T>
CodeAssignment<T> quantize(Tape<T>& tape, const Tensor<T>& z_e, const Tensor<T>& codebook,
                           std::span<const std::size_t> allowed);

/// Value of `quantized`, gradient passed to both `quantized` and `encoded`.
template <typename T>
Tensor<T> straight_through_both(Tape<T>& tape, const Tensor<T>& encoded, const Tensor<T>& quantized);

/// K rows drawn from `samples[n x D]`; repeated rows are jittered until all
/// rows are distinct.
template <typename T>
Tensor<T> init_codebook(const Tensor<T>& samples, std::size_t count, std::mt19937_64& rng);

/// Throws ValidationError if an entry is non-finite or two rows coincide.
template <typename T>
void validate_codebook(const Tensor<T>& codebook);

// ---- restriction ------------------------------------------------------------

struct RestrictionConfig {
  bool enabled = true;
  /// Sequences per group; 0 means ceil(J / 4).
  std::size_t group_size = 0;
  /// Keep the epoch-2 plan for all later epochs.
  bool freeze = false;
};

struct RestrictionPlan {
  bool all_allowed = true;
  std::size_t codebook_size = 0;
  std::vector<std::vector<std::size_t>> subsets;  // sorted code lists
  std::vector<std::size_t> choice;                // per sequence, index into subsets

  /// Allowed codes of training sequence `sequence`.
  std::vector<std::size_t> allowed(std::size_t sequence) const;
};

RestrictionPlan unrestricted_plan(std::size_t codebook_size, std::size_t sequences);

/// `usage[j]` holds the codes sequence j used in the previous epoch. Groups are
/// consecutive windows of a seeded permutation of the sequences, so every
/// sequence lies in at least one group and the subsets jointly cover all
/// previously used codes.
RestrictionPlan build_restriction(const RestrictionConfig& config, std::span<const std::set<std::size_t>> usage,
                                  std::size_t codebook_size, std::uint64_t seed);

// ---- usage statistics --------------------------------------------------------

using CodeHistogram = std::map<std::size_t, std::size_t>;

struct CodeUsage {
  std::vector<CodeHistogram> per_sequence;
  CodeHistogram global;
};

CodeUsage code_usage(std::span<const std::vector<std::size_t>> codes);
std::set<std::size_t> code_set(const CodeHistogram& histogram);
/// |a ∩ b| / |a ∪ b|; two empty sets give 1.
double jaccard(const std::set<std::size_t>& a, const std::set<std::size_t>& b);
/// Shannon entropy in bits of the normalized histogram.
double usage_entropy(const CodeHistogram& histogram);
/// Codes used by each subject, keyed by subject id.
std::map<std::string, std::set<std::size_t>> codes_by_subject(std::span<const std::vector<std::size_t>> codes,
                                                              std::span<const std::string> subjects);
/// Mean segment length in frames over all sequences.
double mean_segment_length(std::span<const std::vector<std::size_t>> codes);

/// One line per frame: frame,code.
void write_codes_csv(const std::filesystem::path& path, std::span<const std::size_t> codes);
std::vector<std::size_t> read_codes_csv(const std::filesystem::path& path);

}  // namespace motioncode
