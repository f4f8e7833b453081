#include <iostream>

#include "CLI11.hpp"
#include "mavos/cli.hpp"
#include "mavos/error.hpp"

using namespace mavos;

namespace {

void add_corruption_flags(CLI::App* cmd, CorruptionArgs& c, std::string& mode) {
  cmd->add_option("--corrupt", mode, "corrupt flow on a fraction of frames: noise, zero or shuffle");
  cmd->add_option("--corrupt-strength", c.strength, "noise scale relative to the frame's max flow magnitude");
  cmd->add_option("--corrupt-fraction", c.fraction, "fraction of frames to corrupt")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--corrupt-seed", c.seed, "seed for frame choice and corruption");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-as-option video object segmentation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic VOS + SOD dataset");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--sequences", synth.sequences, "number of sequences");
  c_synth->add_option("--frames", synth.frames, "frames per sequence");
  c_synth->add_option("--resolution", synth.resolution, "square frame size, a multiple of 32");
  c_synth->add_option("--seed", synth.seed, "generator seed");
  c_synth->add_option("--sod", synth.sod, "number of single-image SOD samples");
  c_synth->add_flag("--force", synth.force, "replace a non-empty output directory");

  std::string config;
  auto* c_train = app.add_subcommand("train", "train from a key = value config file");
  c_train->add_option("--config", config, "config file")->required();

  InferArgs infer;
  std::string infer_mode = "select", infer_corrupt;
  auto* c_infer = app.add_subcommand("infer", "predict masks for a VOS dataset");
  c_infer->add_option("--checkpoint", infer.checkpoint, "model checkpoint")->required();
  c_infer->add_option("--data", infer.data, "VOS dataset root")->required();
  c_infer->add_option("--mode", infer_mode, "flow_only, image_only, select, input, feature or output");
  c_infer->add_option("--out", infer.out, "output directory")->required();
  c_infer->add_flag("--tta", infer.tta, "average over scales and horizontal flip");
  c_infer->add_option("--jobs", infer.jobs, "worker threads per sequence")->check(CLI::PositiveNumber);
  c_infer->add_option("--confidence-threshold", infer.h, "confidence threshold")->check(CLI::Range(0.0, 0.5));
  add_corruption_flags(c_infer, infer.corruption, infer_corrupt);

  EvalArgs eval;
  char group = 0;
  auto* c_eval = app.add_subcommand("eval", "score predicted masks against ground truth");
  c_eval->add_option("--pred", eval.pred, "prediction directory")->required();
  c_eval->add_option("--gt", eval.gt, "ground-truth dataset root")->required();
  c_eval->add_option("--out", eval.out, "report path (JSON; a CSV is written next to it)");
  c_eval->add_option("--group-by", group, "group sequences by the name prefix before this character");

  AblateArgs ablate;
  std::string ablate_corrupt;
  auto* c_ablate = app.add_subcommand("ablate", "run and score every inference mode");
  c_ablate->add_option("--checkpoint", ablate.checkpoint, "model checkpoint")->required();
  c_ablate->add_option("--data", ablate.data, "VOS dataset root")->required();
  c_ablate->add_option("--out", ablate.out, "output directory")->required();
  c_ablate->add_flag("--tta", ablate.tta, "average over scales and horizontal flip");
  c_ablate->add_option("--jobs", ablate.jobs, "worker threads per sequence")->check(CLI::PositiveNumber);
  add_corruption_flags(c_ablate, ablate.corruption, ablate_corrupt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*c_synth) {
      cmd_synth(synth, std::cout);
    } else if (*c_train) {
      cmd_train(config, std::cout);
    } else if (*c_infer) {
      infer.mode = parse_inference_mode(infer_mode);
      if (!infer_corrupt.empty()) infer.corruption.mode = parse_corruption(infer_corrupt);
      cmd_infer(infer, std::cout);
    } else if (*c_eval) {
      if (group) eval.group_delimiter = group;
      cmd_eval(eval, std::cout);
    } else if (*c_ablate) {
      if (!ablate_corrupt.empty()) ablate.corruption.mode = parse_corruption(ablate_corrupt);
      cmd_ablate(ablate, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
