#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mtf/config.hpp"
#include "mtf/core/ops.hpp"
#include "mtf/dataset.hpp"
#include "mtf/eval.hpp"
#include "mtf/gradcheck_suite.hpp"
#include "mtf/model.hpp"

namespace mtf {

namespace fs = std::filesystem;

/// Writes the synthetic train and test splits to out_dir.
void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, int threads, std::ostream& log);

/// Trains on data_dir/train.jsonl and writes the checkpoint plus
/// `<checkpoint stem>.loss.csv` (stage B) and `<stem>.stage_a.loss.csv`
/// beside it.
void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& checkpoint, int threads,
               std::ostream& log);

struct DetectRequest {
  fs::path checkpoint;
  fs::path input;      // a .ppm image or a .jsonl annotation manifest
  fs::path out_dir;
  fs::path proposals;  // optional proposal file replacing the grid
  bool annotate = false;
};

/// Writes out_dir/detections.jsonl, and with `annotate` one PPM and one SVG
/// per image under out_dir/annotated. Every input is read and processed
/// before anything is written.
void cmd_detect(const RunConfig& cfg, const DetectRequest& req, int threads, std::ostream& log);

/// Writes metrics.json and the curve files to out_dir.
EvalReport cmd_eval(const RunConfig& cfg, const fs::path& results, const fs::path& ground_truth,
                    const fs::path& out_dir, std::ostream& log);

/// Runs the gradient-check suite on the configured network; prints one line
/// per parameter block and optionally writes the JSON report. Returns
/// whether every relative error is below the tolerance.
bool cmd_gradcheck(const RunConfig& cfg, const GradCheckSuiteOptions& opt, OpFault fault, const fs::path& report,
                   std::ostream& log);

/// Landmark, pose and gender metrics of `model` on ground-truth face boxes;
/// the detection fields of the report stay empty.
EvalReport evaluate_on_face_boxes(const Model& model, const Dataset& test, const EvalConfig& cfg, int threads);

/// Detects on every image of `test` and pairs results with image names.
std::vector<ImageDetection> detect_dataset(const Model& model, const Dataset& test, const DetectOptions& opt,
                                           int threads);

struct AblationResult {
  std::vector<AblationRow> rows;
  bool multitask_ge_single_detection = false;  // fused AP >= single-detection AP
  bool fused_le_shared_nme = false;            // fused NME <= shared-trunk NME
};

/// AP from the full detection pipeline (architectures with a detection
/// head); NME, pose MAE and gender accuracy from ground-truth face boxes.
AblationRow ablation_row(const std::string& arch, const Model& model, const Dataset& test, const RunConfig& cfg,
                         int threads);

AblationResult summarize_ablation(std::vector<AblationRow> rows);

/// Trains and evaluates all six architectures on data_dir; writes
/// ablation.csv, ablation.json and one checkpoint per architecture.
AblationResult cmd_ablate(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, int threads,
                          std::ostream& log);

nlohmann::json ablation_result_json(const AblationResult& r);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const fs::path& path, const std::string& text);

}  // namespace mtf
