#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "motioncode/attention.hpp"
#include "motioncode/dataio.hpp"

namespace motioncode {

/// W = (I + W_N) ... (I + W_1) over the layers of a causal stack. With
/// `normalized`, each factor is row-normalized before multiplying.
FrameMatrix rollout(const AttentionStack& stack, bool normalized = false);

/// Column sums of a query-by-key weight matrix: total weight each key frame receives.
std::vector<double> weight_sums(const FrameMatrix& weights);
std::vector<double> weight_sums(const AttentionStack& stack);

enum class KeyframeSource { LayerSum, Layer, Rollout };

KeyframeSource parse_keyframe_source(const std::string& name);
std::string to_string(KeyframeSource source);

struct KeyframeOptions {
  KeyframeSource source = KeyframeSource::LayerSum;
  std::size_t layer = 0;      // used with KeyframeSource::Layer
  std::size_t threshold = 1;  // keyframes have count > threshold
};

struct KeyframeSet {
  std::vector<std::size_t> top1;    // argmax key frame per value frame
  std::vector<std::size_t> counts;  // times each frame is someone's top-1
  std::vector<std::size_t> frames;  // keyframe indices, increasing
  std::vector<std::size_t> codes;   // code of each keyframe
};

/// Top-1 counting on a lower-triangular weight matrix; ties go to the earliest frame.
KeyframeSet count_keyframes(const FrameMatrix& weights, std::span<const std::size_t> codes,
                            std::size_t threshold = 1);
KeyframeSet extract_keyframes(const AttentionStack& stack, std::span<const std::size_t> codes,
                              const KeyframeOptions& options = {});

struct GraphNode {
  std::size_t code = 0;
  std::size_t count = 0;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t count = 0;

  bool operator==(const GraphEdge&) const = default;
};

/// Nodes sorted by code, edges sorted by (from, to).
struct TransitionGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  const GraphNode* find(std::size_t code) const;
  std::size_t total_edge_count() const;
  /// Adds counts of `other`; positions of existing nodes are kept.
  void merge(const TransitionGraph& other);
  /// Nodes in `codes` and the edges between them.
  TransitionGraph restricted_to(const std::set<std::size_t>& codes) const;
  /// Throws InvalidArgument when an edge is dangling, a self-loop, or has zero count.
  void validate() const;
};

TransitionGraph transitions(std::span<const std::size_t> keyframe_codes);
TransitionGraph transitions(const KeyframeSet& keyframes);

struct LayoutOptions {
  std::size_t iterations = 50;
  std::uint64_t seed = 0;
  double scale = 1.0;  // k = scale * sqrt(area / n) over the unit square
  bool weighted = true;
};

/// Fruchterman-Reingold layout, centred on the origin and scaled into [-1, 1].
void layout(TransitionGraph& graph, const LayoutOptions& options = {});

struct ExportOptions {
  std::string name = "motion_codes";
  /// Named code sets drawn as dotted clusters.
  std::map<std::string, std::set<std::size_t>> highlights;
};

std::string to_dot(const TransitionGraph& graph, const ExportOptions& options = {});
std::string to_json(const TransitionGraph& graph, const ExportOptions& options = {});
TransitionGraph graph_from_json(const std::string& text);

enum class GraphFormat { Dot, Json };
GraphFormat parse_graph_format(const std::string& name);
void export_graph(const TransitionGraph& graph, GraphFormat format, const std::filesystem::path& path,
                  const ExportOptions& options = {});

/// frame,count,code for every keyframe.
void write_keyframes_csv(const KeyframeSet& keyframes, const std::filesystem::path& path);
/// frame,summed_weight
void write_weight_sums_csv(std::span<const double> sums, const std::filesystem::path& path);

}  // namespace motioncode
