#include "mtf/commands.hpp"

#include <fstream>
#include <iomanip>
#include <map>

#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"
#include "mtf/core/parallel.hpp"
#include "mtf/image.hpp"
#include "mtf/pipeline/detect.hpp"
#include "mtf/pipeline/output.hpp"
#include "mtf/pipeline/proposals.hpp"
#include "mtf/pipeline/train.hpp"
#include "mtf/synth.hpp"

namespace mtf {

void write_file_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << text;
    if (!f) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, int threads, std::ostream& log) {
  const DatasetSummary s = generate_dataset(cfg.seed, cfg.synth, out_dir, threads);
  log << "wrote " << s.train << " train and " << s.test << " test images (" << s.faces << " faces) to "
      << out_dir.string() << "\n";
}

namespace {

Dataset load_split(const fs::path& data_dir, const char* split) {
  const fs::path p = data_dir / (std::string(split) + ".jsonl");
  if (!fs::exists(p)) throw IoError("missing " + p.string() + " (is " + data_dir.string() + " a dataset directory?)");
  return load_dataset(p);
}

void require_valid(const Dataset& ds, double max_angle) {
  const auto problems = validate_dataset(ds, max_angle);
  if (problems.empty()) return;
  std::string msg = "invalid dataset " + ds.root.string() + ":";
  for (std::size_t i = 0; i < problems.size() && i < 5; ++i) msg += "\n  " + problems[i];
  if (problems.size() > 5) msg += "\n  ... " + std::to_string(problems.size() - 5) + " more";
  throw IoError(msg);
}

fs::path sibling(const fs::path& checkpoint, const std::string& suffix) {
  fs::path p = checkpoint;
  p.replace_extension();
  p += suffix;
  return p;
}

}  // namespace

void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& checkpoint, int threads,
               std::ostream& log) {
  const Dataset ds = load_split(data_dir, "train");
  require_valid(ds, cfg.synth.max_angle);
  const auto images = load_training_images(ds, threads);
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  TrainHooks hooks;
  hooks.checkpoint = checkpoint;
  hooks.on_epoch = [&](const EpochLog& e) {
    log << "stage " << e.stage << " epoch " << e.epoch << " loss " << format_double(e.loss.total) << "\n";
    log.flush();
  };
  const TrainResult r = train(images, cfg.network, cfg.train, cfg.seed, hooks);
  r.model.save(checkpoint);
  write_file_atomic(sibling(checkpoint, ".loss.csv"), loss_csv(r.stage_b));
  if (!r.stage_a.empty()) write_file_atomic(sibling(checkpoint, ".stage_a.loss.csv"), loss_csv(r.stage_a));
  log << "saved " << checkpoint.string() << "\n";
}

namespace {

struct DetectInput {
  std::string name;  // as written to the results file
  Tensor<float> image;
};

std::string flat_name(const std::string& image) {
  std::string s = image;
  for (char& c : s) {
    if (c == '/' || c == '\\') c = '_';
  }
  const auto dot = s.rfind('.');
  return dot == std::string::npos ? s : s.substr(0, dot);
}

}  // namespace

void cmd_detect(const RunConfig& cfg, const DetectRequest& req, int threads, std::ostream& log) {
  const Model model = Model::load(req.checkpoint);
  if (!model.spec().has_detection()) {
    throw ConfigError("checkpoint " + req.checkpoint.string() + " has no detection head (" +
                      arch_name(model.spec()) + ")");
  }
  std::vector<DetectInput> inputs;
  if (req.input.extension() == ".jsonl") {
    const Dataset ds = load_dataset(req.input);
    for (std::size_t i = 0; i < ds.records.size(); ++i) inputs.push_back({ds.records[i].image, ds.image(i)});
  } else {
    inputs.push_back({req.input.filename().string(), read_ppm(req.input)});
  }
  std::map<std::string, std::vector<Region>> proposals;
  if (!req.proposals.empty()) proposals = read_proposal_file(req.proposals);

  DetectOptions opt = cfg.pipeline;
  opt.threads = threads;
  std::vector<ImageDetection> all;
  std::vector<std::vector<DetectionResult>> per_image;
  for (const auto& in : inputs) {
    std::span<const Region> props;
    if (!req.proposals.empty()) {
      const auto it = proposals.find(in.name);
      if (it == proposals.end()) throw IoError("no proposals for image " + in.name + " in " + req.proposals.string());
      props = it->second;
    }
    per_image.push_back(detect(model, in.image, opt, props));
    for (const auto& d : per_image.back()) all.push_back({in.name, d});
  }

  std::string text;
  for (const auto& d : all) text += detection_line(d) + "\n";
  write_file_atomic(req.out_dir / "detections.jsonl", text);
  if (req.annotate) {
    const fs::path dir = req.out_dir / "annotated";
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::string stem = flat_name(inputs[i].name);
      write_file_atomic(dir / (stem + ".ppm"), encode_ppm(annotate_image(inputs[i].image, per_image[i])));
      write_file_atomic(dir / (stem + ".svg"),
                        detections_svg(image_width(inputs[i].image), image_height(inputs[i].image), stem + ".ppm",
                                       per_image[i]));
    }
  }
  log << all.size() << " detections in " << inputs.size() << " image(s) -> " << (req.out_dir / "detections.jsonl").string()
      << "\n";
}

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& results, const fs::path& ground_truth,
                    const fs::path& out_dir, std::ostream& log) {
  const auto dets = read_detections(results);
  const auto gt = read_annotations(ground_truth);
  const EvalReport rep = evaluate(dets, gt, cfg.eval);
  write_report(rep, out_dir);
  log << report_json(rep).dump(2) << "\n";
  return rep;
}

bool cmd_gradcheck(const RunConfig& cfg, const GradCheckSuiteOptions& opt, OpFault fault, const fs::path& report,
                   std::ostream& log) {
  struct FaultGuard {
    explicit FaultGuard(OpFault f) { g_op_fault.store(f); }
    ~FaultGuard() { g_op_fault.store(OpFault::None); }
  } guard(fault);
  const GradCheckSuite suite = run_gradcheck_suite(cfg.network, opt);
  for (const auto& c : suite.cases) {
    for (const auto& b : c.blocks) {
      log << std::left << std::setw(28) << c.name << ' ' << std::setw(18) << b.name << " checked " << std::setw(6)
          << b.checked << " max_rel " << std::scientific << std::setprecision(3) << b.max_rel_error
          << std::defaultfloat << "\n";
    }
  }
  log << "max relative error " << std::scientific << std::setprecision(3) << suite.max_rel_error() << " (tolerance "
      << suite.tolerance << ")" << std::defaultfloat << " over " << opt.seeds << " seeds: "
      << (suite.passed() ? "PASS" : "FAIL") << "\n";
  if (!report.empty()) write_file_atomic(report, gradcheck_json(suite).dump(2) + "\n");
  return suite.passed();
}

EvalReport evaluate_on_face_boxes(const Model& model, const Dataset& test, const EvalConfig& cfg, int threads) {
  std::vector<std::vector<ImageDetection>> per(test.records.size());
  parallel_for(test.records.size(), threads, [&](std::size_t i) {
    const Tensor<float> image = test.image(i);
    for (const auto& f : test.records[i].faces) {
      const PredictionRecord r = infer_region(model, image, f.box);
      DetectionResult d;
      d.box = f.box;
      d.score = 1;
      d.contributors = 1;
      if (r.has_landmarks) {
        d.has_landmarks = true;
        d.landmarks = denormalize_landmarks(f.box, r.landmarks);
      }
      if (r.has_pose) {
        d.has_pose = true;
        d.pose_deg = r.pose_degrees();
      }
      if (r.has_gender) {
        d.has_gender = true;
        d.gender_prob = r.gender;
        d.gender = r.gender > 0.5 ? 1 : 0;
      }
      per[i].push_back({test.records[i].image, d});
    }
  });
  std::vector<ImageDetection> dets;
  for (auto& v : per) dets.insert(dets.end(), v.begin(), v.end());
  return evaluate(dets, test.records, cfg, false);
}

std::vector<ImageDetection> detect_dataset(const Model& model, const Dataset& test, const DetectOptions& opt,
                                           int threads) {
  DetectOptions o = opt;
  o.threads = threads;
  std::vector<ImageDetection> out;
  for (std::size_t i = 0; i < test.records.size(); ++i) {
    for (const auto& d : detect(model, test.image(i), o)) out.push_back({test.records[i].image, d});
  }
  return out;
}

AblationRow ablation_row(const std::string& arch, const Model& model, const Dataset& test, const RunConfig& cfg,
                         int threads) {
  AblationRow row;
  row.arch = arch;
  if (model.spec().has_detection()) {
    row.ap = evaluate(detect_dataset(model, test, cfg.pipeline, threads), test.records, cfg.eval).ap();
  }
  const EvalReport boxes = evaluate_on_face_boxes(model, test, cfg.eval, threads);
  row.nme = boxes.nme_mean();
  row.pose_mae = boxes.pose_mae_mean();
  row.gender_acc = boxes.gender();
  return row;
}

AblationResult summarize_ablation(std::vector<AblationRow> rows) {
  AblationResult r;
  auto find = [&](const std::string& arch) -> const AblationRow* {
    for (const auto& row : rows) {
      if (row.arch == arch) return &row;
    }
    return nullptr;
  };
  const AblationRow* fused = find("fused");
  const AblationRow* shared = find("shared-trunk");
  const AblationRow* single = find("single-detection");
  if (fused && single && fused->ap && single->ap) r.multitask_ge_single_detection = *fused->ap >= *single->ap;
  if (fused && shared && fused->nme && shared->nme) r.fused_le_shared_nme = *fused->nme <= *shared->nme;
  r.rows = std::move(rows);
  return r;
}

nlohmann::json ablation_result_json(const AblationResult& r) {
  nlohmann::json j = ablation_json(r.rows);
  j["orderings"] = {{"multitask_ap_ge_single_detection", r.multitask_ge_single_detection},
                    {"fused_nme_le_shared_trunk", r.fused_le_shared_nme}};
  return j;
}

AblationResult cmd_ablate(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, int threads,
                          std::ostream& log) {
  const Dataset train_ds = load_split(data_dir, "train");
  const Dataset test_ds = load_split(data_dir, "test");
  require_valid(train_ds, cfg.synth.max_angle);
  const auto images = load_training_images(train_ds, threads);
  fs::create_directories(out_dir);
  std::optional<Model> warm;
  std::vector<AblationRow> rows;
  for (const auto& arch : ablation_arch_names()) {
    NetworkSpec spec = cfg.network;
    set_arch(spec, arch);
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog& e) {
      log << arch << " stage " << e.stage << " epoch " << e.epoch << " loss " << format_double(e.loss.total) << "\n";
      log.flush();
    };
    TrainResult tr = train(images, spec, cfg.train, cfg.seed, hooks, warm ? &*warm : nullptr);
    if (!warm && tr.warm_start) warm = std::move(tr.warm_start);
    tr.model.save(out_dir / (arch + ".mfk"));
    rows.push_back(ablation_row(arch, tr.model, test_ds, cfg, threads));
    log << arch << " done\n";
  }
  AblationResult r = summarize_ablation(std::move(rows));
  write_file_atomic(out_dir / "ablation.csv", ablation_csv(r.rows));
  write_file_atomic(out_dir / "ablation.json", ablation_result_json(r).dump(2) + "\n");
  log << ablation_csv(r.rows);
  return r;
}

}  // namespace mtf
