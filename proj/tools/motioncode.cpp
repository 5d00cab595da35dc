#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "motioncode/errors.hpp"
#include "motioncode/pipeline.hpp"

namespace fs = std::filesystem;
using namespace motioncode;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> decoder_width;
  std::optional<std::string> task;
  bool no_restriction = false;
  std::string out;
  std::string checkpoint;
  std::string manifest;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.decoder_width) c.model.decoder_window = *o.decoder_width;
  if (o.task) c.task = parse_probe_task(*o.task);
  if (o.no_restriction) c.train.restriction.enabled = false;
  c.validate();
  return c;
}

void common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for every random choice");
  cmd->add_option("--threads", o.threads, "Worker threads for per-sequence work");
  cmd->add_option("--out", o.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete motion codes: synthesize, train, encode, analyze, probe, report"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Write a labelled synthetic dataset and its manifest");
  common(synth, o);

  auto* train = app.add_subcommand("train", "Train the encoder, decoder and codebook");
  common(train, o);
  train->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--decoder-width", o.decoder_width, "Decoder attention width M");
  train->add_flag("--no-restriction", o.no_restriction, "Allow every code in every epoch");

  auto* encode = app.add_subcommand("encode", "Write per-sequence motion codes");
  auto* analyze = app.add_subcommand("analyze", "Keyframes, weight sums and transition graphs");
  auto* probe = app.add_subcommand("probe", "Train and score a linear probe on frozen codes");
  for (auto* cmd : {encode, analyze, probe}) {
    common(cmd, o);
    cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint from train")->required()->check(CLI::ExistingFile);
    cmd->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  }
  probe->add_option("--task", o.task, "segmentation or classification")
      ->check(CLI::IsMember({"segmentation", "classification"}));

  auto* report = app.add_subcommand("report", "Summarize every run directory below --out");
  report->add_option("--out", o.out, "Run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    const fs::path out = o.out;
    if (synth->parsed()) {
      std::cout << cmd_synth(resolve(o), out).string() << "\n";
    } else if (train->parsed()) {
      const auto result = cmd_train(resolve(o), o.manifest, out);
      if (!result.log.epochs.empty()) {
        const auto& last = result.log.steps.back();
        std::cout << "steps " << last.step << " loss " << last.loss << " codes " << last.codes_used << "\n";
      }
      std::cout << result.checkpoint.string() << "\n";
    } else if (encode->parsed()) {
      cmd_encode(resolve(o), o.checkpoint, o.manifest, out);
      std::cout << (out / "code_usage.json").string() << "\n";
    } else if (analyze->parsed()) {
      const auto s = cmd_analyze(resolve(o), o.checkpoint, o.manifest, out);
      std::cout << "keyframes " << s.total_keyframes << " nodes " << s.graph_nodes << " edges " << s.graph_edges
                << "\n";
    } else if (probe->parsed()) {
      for (const auto& r : cmd_probe(resolve(o), o.checkpoint, o.manifest, out)) {
        std::cout << r.task << " " << r.split << " frame_accuracy " << r.frame_accuracy << " edit " << r.edit
                  << " f1_50 " << r.f1_50 << " micro " << r.micro_accuracy << " macro_recall " << r.macro_recall
                  << "\n";
      }
    } else if (report->parsed()) {
      std::cout << cmd_report(out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
