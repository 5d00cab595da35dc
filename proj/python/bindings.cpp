#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "motioncode/analysis.hpp"
#include "motioncode/errors.hpp"
#include "motioncode/pipeline.hpp"
#include "motioncode/probing.hpp"

namespace py = pybind11;
using namespace motioncode;

namespace {

AttentionStack stack_from(const std::vector<FrameMatrix>& layers, std::size_t width) {
  AttentionStack stack;
  for (const auto& w : layers) {
    if (w.rows() != w.cols()) throw InvalidArgument("attention layers must be square");
    const auto n = static_cast<std::size_t>(w.rows());
    BandMatrix b(n, width == 0 ? n : width);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t m = 0; m < b.width(); ++m) {
        if (b.valid_slot(t, m)) b.slot(t, m) = w(t, b.slot_column(t, m));
      }
    }
    stack.layers.push_back(std::move(b));
  }
  return stack;
}

py::dict keyframes_dict(const KeyframeSet& k) {
  py::dict d;
  d["top1"] = k.top1;
  d["counts"] = k.counts;
  d["frames"] = k.frames;
  d["codes"] = k.codes;
  return d;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["task"] = r.task;
  d["split"] = r.split;
  d["frame_accuracy"] = r.frame_accuracy;
  d["edit"] = r.edit;
  d["f1_50"] = r.f1_50;
  d["micro_accuracy"] = r.micro_accuracy;
  d["macro_recall"] = r.macro_recall;
  return d;
}

ExportOptions export_options(const std::string& name, const std::map<std::string, std::set<std::size_t>>& hl) {
  ExportOptions o;
  o.name = name;
  o.highlights = hl;
  return o;
}

}  // namespace

PYBIND11_MODULE(motioncode, m) {
  m.doc() = "Discrete motion codes from causal attention: pipeline, keyframes, graphs and probe metrics";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("load", &RunConfig::load, py::arg("path"))
      .def_static(
          "parse", [](const std::string& text) { return RunConfig::from_file(KeyValueFile::parse(text)); },
          py::arg("text"))
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("threads", &RunConfig::threads)
      .def_property(
          "task", [](const RunConfig& c) { return to_string(c.task); },
          [](RunConfig& c, const std::string& t) { c.task = parse_probe_task(t); })
      .def("validate", &RunConfig::validate)
      .def("hash", &RunConfig::hash)
      .def("to_string", [](const RunConfig& c) { return c.to_file().to_string(); });

  m.def("synth", &cmd_synth, py::arg("config"), py::arg("out_dir"));
  m.def(
      "train",
      [](const RunConfig& c, const std::filesystem::path& manifest, const std::filesystem::path& out) {
        return cmd_train(c, manifest, out).checkpoint;
      },
      py::arg("config"), py::arg("manifest"), py::arg("out_dir"));
  m.def("encode", &cmd_encode, py::arg("config"), py::arg("checkpoint"), py::arg("manifest"), py::arg("out_dir"));
  m.def(
      "analyze",
      [](const RunConfig& c, const std::filesystem::path& ckpt, const std::filesystem::path& manifest,
         const std::filesystem::path& out) {
        const auto s = cmd_analyze(c, ckpt, manifest, out);
        py::dict d;
        d["sequences"] = s.sequences;
        d["keyframes"] = s.keyframes;
        d["total_keyframes"] = s.total_keyframes;
        d["graph_nodes"] = s.graph_nodes;
        d["graph_edges"] = s.graph_edges;
        return d;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("manifest"), py::arg("out_dir"));
  m.def(
      "probe",
      [](const RunConfig& c, const std::filesystem::path& ckpt, const std::filesystem::path& manifest,
         const std::filesystem::path& out) {
        py::list l;
        for (const auto& r : cmd_probe(c, ckpt, manifest, out)) l.append(report_dict(r));
        return l;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("manifest"), py::arg("out_dir"));
  m.def("report", &cmd_report, py::arg("run_dir"));

  m.def(
      "rollout",
      [](const std::vector<FrameMatrix>& layers, std::size_t width, bool normalized) {
        return rollout(stack_from(layers, width), normalized);
      },
      py::arg("layers"), py::arg("width") = 0, py::arg("normalized") = false,
      "Product (I + W_N)...(I + W_1) of lower-triangular per-layer weights; width 0 keeps the full band.");
  m.def(
      "weight_sums", [](const FrameMatrix& w) { return weight_sums(w); }, py::arg("weights"));
  m.def(
      "count_keyframes",
      [](const FrameMatrix& w, const std::vector<std::size_t>& codes, std::size_t threshold) {
        return keyframes_dict(count_keyframes(w, codes, threshold));
      },
      py::arg("weights"), py::arg("codes"), py::arg("threshold") = 1);

  py::class_<TransitionGraph>(m, "TransitionGraph")
      .def_property_readonly("nodes",
                             [](const TransitionGraph& g) {
                               py::list l;
                               for (const auto& n : g.nodes) l.append(py::make_tuple(n.code, n.count, n.x, n.y));
                               return l;
                             })
      .def_property_readonly("edges",
                             [](const TransitionGraph& g) {
                               py::list l;
                               for (const auto& e : g.edges) l.append(py::make_tuple(e.from, e.to, e.count));
                               return l;
                             })
      .def("total_edge_count", &TransitionGraph::total_edge_count)
      .def(
          "layout",
          [](TransitionGraph& g, std::size_t iterations, std::uint64_t seed) {
            layout(g, LayoutOptions{iterations, seed});
          },
          py::arg("iterations") = 50, py::arg("seed") = 0)
      .def(
          "to_dot", [](const TransitionGraph& g, const std::string& name,
                       const std::map<std::string, std::set<std::size_t>>& hl) { return to_dot(g, export_options(name, hl)); },
          py::arg("name") = "motion_codes", py::arg("highlights") = std::map<std::string, std::set<std::size_t>>{})
      .def(
          "to_json", [](const TransitionGraph& g, const std::string& name,
                        const std::map<std::string, std::set<std::size_t>>& hl) { return to_json(g, export_options(name, hl)); },
          py::arg("name") = "motion_codes", py::arg("highlights") = std::map<std::string, std::set<std::size_t>>{})
      .def_static("from_json", &graph_from_json, py::arg("text"));
  m.def(
      "transitions", [](const std::vector<std::size_t>& codes) { return transitions(codes); },
      py::arg("keyframe_codes"));

  m.def(
      "frame_accuracy", [](const std::vector<int>& p, const std::vector<int>& g) { return frame_accuracy(p, g); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "edit_score", [](const std::vector<int>& p, const std::vector<int>& g) { return edit_score(p, g); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "f1_at_50",
      [](const std::vector<int>& p, const std::vector<int>& g) {
        return f1_at_50(std::span<const int>(p), std::span<const int>(g));
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "levenshtein", [](const std::vector<int>& a, const std::vector<int>& b) { return levenshtein(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "classification_metrics",
      [](const std::vector<int>& p, const std::vector<int>& g) {
        const auto s = classification_metrics(p, g);
        return py::make_tuple(s.micro_accuracy, s.macro_recall);
      },
      py::arg("pred"), py::arg("gt"));
}
