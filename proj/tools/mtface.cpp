// Command-line front end: synth, train, detect, eval, gradcheck, ablate.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mtf/commands.hpp"
#include "mtf/core/error.hpp"

namespace {

constexpr int kUserError = 1;
constexpr int kInternalError = 2;

mtf::RunConfig load(const std::string& path) {
  return path.empty() ? mtf::RunConfig{} : mtf::load_run_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task face analysis: synthetic data, training, detection and evaluation."};
  app.require_subcommand(1);
  app.footer("\n" + mtf::config_help() +
             "\nExit codes: 0 success, 1 user error (bad input, config or file), 2 internal failure.");
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for data loading, rendering and inference")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  std::string config;
  app.add_option("-c,--config", config, "config file of `key = value` lines; omitted keys keep their defaults");

  auto* synth = app.add_subcommand("synth", "render the synthetic train/test dataset");
  std::string synth_out;
  synth->add_option("-o,--out", synth_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a network on <data>/train.jsonl");
  std::string train_data, train_out, arch;
  train->add_option("-d,--data", train_data, "dataset directory")->required();
  train->add_option("-o,--out", train_out, "checkpoint path")->required();
  train->add_option("--arch", arch, "override network.arch");

  auto* detect = app.add_subcommand("detect", "detect faces in a PPM image or every image of a manifest");
  mtf::DetectRequest det;
  std::string det_model, det_input, det_out, det_props;
  detect->add_option("-m,--model", det_model, "checkpoint")->required();
  detect->add_option("-i,--input", det_input, "image (.ppm) or annotation manifest (.jsonl)")->required();
  detect->add_option("-o,--out", det_out, "output directory")->required();
  detect->add_option("--proposals", det_props, "proposal file (`image cx cy w h` lines) replacing the grid");
  detect->add_flag("--annotate", det.annotate, "also write annotated PPM and SVG images");

  auto* eval = app.add_subcommand("eval", "score detections against ground truth");
  std::string eval_results, eval_gt, eval_out;
  eval->add_option("-r,--results", eval_results, "detections.jsonl")->required();
  eval->add_option("-g,--gt", eval_gt, "ground-truth annotation manifest")->required();
  eval->add_option("-o,--out", eval_out, "output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every operator and the network");
  mtf::GradCheckSuiteOptions gc;
  std::string gc_report, corrupt = "none";
  gradcheck->add_option("--seeds", gc.seeds, "random cases per operator")->check(CLI::Range(1, 10000))->capture_default_str();
  gradcheck->add_option("--report", gc_report, "write the JSON report here");
  gradcheck->add_option("--corrupt", corrupt, "test hook: break an operator's backward pass")
      ->check(CLI::IsMember({"none", "relu", "conv-weight"}))
      ->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "train and evaluate all six architectures");
  std::string abl_data, abl_out;
  ablate->add_option("-d,--data", abl_data, "dataset directory")->required();
  ablate->add_option("-o,--out", abl_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUserError;
  }

  try {
    mtf::RunConfig cfg = load(config);
    if (*synth) {
      mtf::cmd_synth(cfg, synth_out, threads, std::cout);
    } else if (*train) {
      if (!arch.empty()) {
        mtf::set_arch(cfg.network, arch);
        mtf::validate(cfg);
      }
      mtf::cmd_train(cfg, train_data, train_out, threads, std::cout);
    } else if (*detect) {
      det.checkpoint = det_model;
      det.input = det_input;
      det.out_dir = det_out;
      det.proposals = det_props;
      mtf::cmd_detect(cfg, det, threads, std::cout);
    } else if (*eval) {
      mtf::cmd_eval(cfg, eval_results, eval_gt, eval_out, std::cout);
    } else if (*gradcheck) {
      gc.seed = cfg.seed;
      const mtf::OpFault fault = corrupt == "relu"          ? mtf::OpFault::ReluBackward
                                 : corrupt == "conv-weight" ? mtf::OpFault::ConvWeightBackward
                                                            : mtf::OpFault::None;
      if (!mtf::cmd_gradcheck(cfg, gc, fault, gc_report, std::cout)) return kInternalError;
    } else if (*ablate) {
      mtf::cmd_ablate(cfg, abl_data, abl_out, threads, std::cout);
    }
    return 0;
  } catch (const mtf::UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}
