#include "motioncode/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "motioncode/errors.hpp"

namespace motioncode {

namespace {

std::size_t stack_size(const AttentionStack& stack) {
  if (stack.layers.empty()) throw InvalidArgument("attention stack has no layers");
  const std::size_t n = stack.layers.front().size();
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    if (stack.layers[i].size() != n) {
      throw InvalidArgument("attention layer " + std::to_string(i + 1) + " covers " +
                            std::to_string(stack.layers[i].size()) + " frames, expected " + std::to_string(n));
    }
  }
  return n;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

FrameMatrix rollout(const AttentionStack& stack, bool normalized) {
  const std::size_t n = stack_size(stack);
  FrameMatrix r = FrameMatrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(n));
  for (const auto& w : stack.layers) {
    // In place, last row first.
    for (std::size_t t = n; t-- > 0;) {
      const auto len = static_cast<Eigen::Index>(t + 1);
      row.head(len) = r.row(static_cast<Eigen::Index>(t)).head(len);
      double total = 1.0;
      for (std::size_t m = 0; m < w.width(); ++m) {
        if (!w.valid_slot(t, m)) continue;
        const double a = w.slot(t, m);
        if (a == 0.0) continue;
        total += a;
        const auto col = static_cast<Eigen::Index>(w.slot_column(t, m));
        row.head(col + 1) += a * r.row(col).head(col + 1);
      }
      if (normalized && total != 0.0) row.head(len) /= total;
      r.row(static_cast<Eigen::Index>(t)).head(len) = row.head(len);
    }
  }
  return r;
}

std::vector<double> weight_sums(const FrameMatrix& weights) {
  std::vector<double> out(static_cast<std::size_t>(weights.cols()));
  for (Eigen::Index c = 0; c < weights.cols(); ++c) out[static_cast<std::size_t>(c)] = weights.col(c).sum();
  return out;
}

std::vector<double> weight_sums(const AttentionStack& stack) {
  const std::size_t n = stack_size(stack);
  std::vector<double> out(n, 0.0);
  for (const auto& w : stack.layers) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t m = 0; m < w.width(); ++m) {
        if (w.valid_slot(t, m)) out[w.slot_column(t, m)] += w.slot(t, m);
      }
    }
  }
  return out;
}

KeyframeSource parse_keyframe_source(const std::string& name) {
  if (name == "layer_sum") return KeyframeSource::LayerSum;
  if (name == "layer") return KeyframeSource::Layer;
  if (name == "rollout") return KeyframeSource::Rollout;
  throw InvalidArgument("unknown keyframe source '" + name + "' (expected layer_sum, layer or rollout)");
}

std::string to_string(KeyframeSource source) {
  switch (source) {
    case KeyframeSource::LayerSum: return "layer_sum";
    case KeyframeSource::Layer: return "layer";
    case KeyframeSource::Rollout: return "rollout";
  }
  return "?";
}

namespace {

KeyframeSet finish_keyframes(std::vector<std::size_t> top1, std::span<const std::size_t> codes,
                             std::size_t threshold) {
  KeyframeSet ks;
  ks.counts.assign(top1.size(), 0);
  for (auto s : top1) ++ks.counts[s];
  for (std::size_t t = 0; t < ks.counts.size(); ++t) {
    if (ks.counts[t] > threshold) {
      ks.frames.push_back(t);
      ks.codes.push_back(codes[t]);
    }
  }
  ks.top1 = std::move(top1);
  return ks;
}

void check_codes(std::size_t n, std::span<const std::size_t> codes) {
  if (codes.size() != n) {
    throw InvalidArgument("keyframe extraction got " + std::to_string(codes.size()) + " codes for " +
                          std::to_string(n) + " frames");
  }
}

}  // namespace

KeyframeSet count_keyframes(const FrameMatrix& weights, std::span<const std::size_t> codes, std::size_t threshold) {
  if (weights.rows() != weights.cols()) throw InvalidArgument("keyframe weights must be square");
  const auto n = static_cast<std::size_t>(weights.rows());
  check_codes(n, codes);
  std::vector<std::size_t> top1(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t best = 0;
    double best_w = weights(static_cast<Eigen::Index>(t), 0);
    for (std::size_t s = 1; s <= t; ++s) {
      const double w = weights(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s));
      if (w > best_w) {
        best_w = w;
        best = s;
      }
    }
    top1[t] = best;
  }
  return finish_keyframes(std::move(top1), codes, threshold);
}

KeyframeSet extract_keyframes(const AttentionStack& stack, std::span<const std::size_t> codes,
                              const KeyframeOptions& options) {
  const std::size_t n = stack_size(stack);
  check_codes(n, codes);
  if (options.source == KeyframeSource::Rollout) {
    return count_keyframes(rollout(stack), codes, options.threshold);
  }
  std::vector<const BandMatrix*> used;
  if (options.source == KeyframeSource::Layer) {
    if (options.layer >= stack.layers.size()) {
      throw InvalidArgument("keyframe layer " + std::to_string(options.layer) + " out of range for " +
                            std::to_string(stack.layers.size()) + " layers");
    }
    used.push_back(&stack.layers[options.layer]);
  } else {
    for (const auto& w : stack.layers) used.push_back(&w);
  }
  const std::size_t width = used.front()->width();
  for (const auto* w : used) {
    if (w->width() != width) throw InvalidArgument("attention layers have different widths");
  }
  std::vector<std::size_t> top1(n);
  for (std::size_t t = 0; t < n; ++t) {
    bool found = false;
    double best_w = 0.0;
    for (std::size_t m = 0; m < width; ++m) {
      if (!used.front()->valid_slot(t, m)) continue;
      double w = 0.0;
      for (const auto* layer : used) w += layer->slot(t, m);
      if (!found || w > best_w) {
        found = true;
        best_w = w;
        top1[t] = used.front()->slot_column(t, m);
      }
    }
  }
  return finish_keyframes(std::move(top1), codes, options.threshold);
}

const GraphNode* TransitionGraph::find(std::size_t code) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), code,
                             [](const GraphNode& n, std::size_t c) { return n.code < c; });
  return it != nodes.end() && it->code == code ? &*it : nullptr;
}

std::size_t TransitionGraph::total_edge_count() const {
  std::size_t total = 0;
  for (const auto& e : edges) total += e.count;
  return total;
}

void TransitionGraph::merge(const TransitionGraph& other) {
  std::map<std::size_t, GraphNode> n;
  for (const auto& node : nodes) n[node.code] = node;
  for (const auto& node : other.nodes) {
    auto [it, fresh] = n.try_emplace(node.code, node);
    if (!fresh) it->second.count += node.count;
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> e;
  for (const auto& edge : edges) e[{edge.from, edge.to}] += edge.count;
  for (const auto& edge : other.edges) e[{edge.from, edge.to}] += edge.count;
  nodes.clear();
  for (auto& [code, node] : n) nodes.push_back(node);
  edges.clear();
  for (auto& [key, count] : e) edges.push_back({key.first, key.second, count});
}

TransitionGraph TransitionGraph::restricted_to(const std::set<std::size_t>& codes) const {
  TransitionGraph g;
  for (const auto& node : nodes) {
    if (codes.count(node.code)) g.nodes.push_back(node);
  }
  for (const auto& edge : edges) {
    if (codes.count(edge.from) && codes.count(edge.to)) g.edges.push_back(edge);
  }
  return g;
}

void TransitionGraph::validate() const {
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i - 1].code >= nodes[i].code) throw InvalidArgument("graph nodes are not sorted and unique");
  }
  for (const auto& e : edges) {
    const std::string tag = std::to_string(e.from) + "->" + std::to_string(e.to);
    if (e.from == e.to) throw InvalidArgument("self-loop edge " + tag);
    if (e.count == 0) throw InvalidArgument("edge " + tag + " has zero count");
    if (!find(e.from) || !find(e.to)) throw InvalidArgument("edge " + tag + " has a missing endpoint");
  }
}

TransitionGraph transitions(std::span<const std::size_t> keyframe_codes) {
  std::map<std::size_t, std::size_t> counts;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> edges;
  for (std::size_t i = 0; i < keyframe_codes.size(); ++i) {
    ++counts[keyframe_codes[i]];
    if (i > 0 && keyframe_codes[i] != keyframe_codes[i - 1]) ++edges[{keyframe_codes[i - 1], keyframe_codes[i]}];
  }
  TransitionGraph g;
  for (auto [code, count] : counts) g.nodes.push_back({code, count, 0.0, 0.0});
  for (auto [key, count] : edges) g.edges.push_back({key.first, key.second, count});
  return g;
}

TransitionGraph transitions(const KeyframeSet& keyframes) { return transitions(keyframes.codes); }

void layout(TransitionGraph& graph, const LayoutOptions& options) {
  const std::size_t n = graph.nodes.size();
  if (n == 0) return;
  std::map<std::size_t, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[graph.nodes[i].code] = i;
  std::vector<double> adj(n * n, 0.0);
  for (const auto& e : graph.edges) {
    const double w = options.weighted ? static_cast<double>(e.count) : 1.0;
    const auto a = index.at(e.from), b = index.at(e.to);
    adj[a * n + b] += w;
    adj[b * n + a] += w;
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = unit(rng);
    y[i] = unit(rng);
  }
  const double k = options.scale * std::sqrt(1.0 / static_cast<double>(n));
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  double temperature = 0.1 * std::max(*xmax - *xmin, *ymax - *ymin);
  const double cooling = temperature / static_cast<double>(options.iterations + 1);

  std::vector<double> dx(n), dy(n);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double fx = 0.0, fy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double ddx = x[i] - x[j], ddy = y[i] - y[j];
        const double d = std::max(std::hypot(ddx, ddy), 0.01);
        const double f = k * k / (d * d) - adj[i * n + j] * d / k;
        fx += ddx * f;
        fy += ddy * f;
      }
      const double len = std::max(std::hypot(fx, fy), 0.01);
      dx[i] = fx * temperature / len;
      dy[i] = fy * temperature / len;
    }
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += dx[i];
      y[i] += dy[i];
    }
    temperature -= cooling;
  }

  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cx += x[i];
    cy += y[i];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  double extent = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] -= cx;
    y[i] -= cy;
    extent = std::max({extent, std::abs(x[i]), std::abs(y[i])});
  }
  for (std::size_t i = 0; i < n; ++i) {
    graph.nodes[i].x = extent > 0.0 ? x[i] / extent : 0.0;
    graph.nodes[i].y = extent > 0.0 ? y[i] / extent : 0.0;
  }
}

std::string to_dot(const TransitionGraph& graph, const ExportOptions& options) {
  std::ostringstream os;
  os << "digraph " << quoted(options.name) << " {\n";
  os << "  node [shape=circle];\n";
  for (const auto& n : graph.nodes) {
    const auto id = std::to_string(n.code);
    os << "  " << quoted(id) << " [label=" << quoted(id) << ", count=" << n.count << ", pos=\""
       << number(n.x) << "," << number(n.y) << "!\", penwidth=" << number(std::log1p(double(n.count))) << "];\n";
  }
  for (const auto& e : graph.edges) {
    os << "  " << quoted(std::to_string(e.from)) << " -> " << quoted(std::to_string(e.to)) << " [count=" << e.count
       << ", penwidth=" << number(std::log1p(double(e.count))) << "];\n";
  }
  for (const auto& [name, codes] : options.highlights) {
    os << "  subgraph " << quoted("cluster_" + name) << " {\n";
    os << "    label=" << quoted(name) << ";\n    style=dotted;\n";
    for (auto c : codes) {
      if (graph.find(c)) os << "    " << quoted(std::to_string(c)) << ";\n";
    }
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

std::string to_json(const TransitionGraph& graph, const ExportOptions& options) {
  nlohmann::json j;
  j["name"] = options.name;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : graph.nodes) j["nodes"].push_back({{"id", n.code}, {"count", n.count}, {"x", n.x}, {"y", n.y}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges) j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"count", e.count}});
  j["highlights"] = nlohmann::json::object();
  for (const auto& [name, codes] : options.highlights) j["highlights"][name] = codes;
  return j.dump(2) + "\n";
}

TransitionGraph graph_from_json(const std::string& text) {
  TransitionGraph g;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& n : j.at("nodes")) {
      g.nodes.push_back({n.at("id").get<std::size_t>(), n.at("count").get<std::size_t>(), n.at("x").get<double>(),
                         n.at("y").get<double>()});
    }
    for (const auto& e : j.at("edges")) {
      g.edges.push_back({e.at("from").get<std::size_t>(), e.at("to").get<std::size_t>(),
                         e.at("count").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("graph JSON: ") + e.what());
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) { return a.code < b.code; });
  std::sort(g.edges.begin(), g.edges.end(),
            [](const auto& a, const auto& b) { return std::pair(a.from, a.to) < std::pair(b.from, b.to); });
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("graph JSON: ") + e.what());
  }
  return g;
}

GraphFormat parse_graph_format(const std::string& name) {
  if (name == "dot") return GraphFormat::Dot;
  if (name == "json") return GraphFormat::Json;
  throw InvalidArgument("unknown graph format '" + name + "' (expected dot or json)");
}

void export_graph(const TransitionGraph& graph, GraphFormat format, const std::filesystem::path& path,
                  const ExportOptions& options) {
  auto out = open_output(path);
  out << (format == GraphFormat::Dot ? to_dot(graph, options) : to_json(graph, options));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_keyframes_csv(const KeyframeSet& keyframes, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "frame,count,code\n";
  for (std::size_t i = 0; i < keyframes.frames.size(); ++i) {
    out << keyframes.frames[i] << ',' << keyframes.counts[keyframes.frames[i]] << ',' << keyframes.codes[i] << '\n';
  }
}

void write_weight_sums_csv(std::span<const double> sums, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "frame,summed_weight\n" << std::setprecision(17);
  for (std::size_t t = 0; t < sums.size(); ++t) out << t << ',' << sums[t] << '\n';
}

}  // namespace motioncode
