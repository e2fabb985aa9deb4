#include "hdet/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "hdet/anchors.hpp"
#include "hdet/error.hpp"
#include "hdet/eval.hpp"
#include "hdet/gradcheck.hpp"
#include "hdet/model.hpp"

namespace hdet::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

void RunConfig::validate() const {
  synth.validate();
  if (count < 1) throw ValidationError("count must be >= 1");
  if (model.anchors.empty() && model.anchor_count < 1)
    throw ValidationError("model.anchor_count must be >= 1");
  for (const auto& a : model.anchors)
    if (!(a.w > 0.0 && a.h > 0.0)) throw ValidationError("model.anchors must be positive");
  train.validate();
}

void to_json(json& j, const ModelSettings& m) {
  json anchors = json::array();
  for (const auto& a : m.anchors) anchors.push_back({a.w, a.h});
  j = json{{"widths", m.widths},
           {"anchor_count", m.anchor_count},
           {"anchor_seed", m.anchor_seed},
           {"anchors", anchors}};
}

void from_json(const json& j, ModelSettings& m) {
  try {
    if (j.contains("widths")) m.widths = j.at("widths").get<std::array<std::size_t, 4>>();
    m.anchor_count = j.value("anchor_count", m.anchor_count);
    m.anchor_seed = j.value("anchor_seed", m.anchor_seed);
    if (j.contains("anchors")) {
      m.anchors.clear();
      for (const auto& a : j.at("anchors")) m.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"synth", c.synth}, {"count", c.count}, {"model", c.model}, {"train", c.train}};
}

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ValidationError("run config must be a JSON object");
  try {
    if (j.contains("synth")) j.at("synth").get_to(c.synth);
    c.count = j.value("count", c.count);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("train")) j.at("train").get_to(c.train);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

std::vector<HierLossParams> ablation_variants(const std::vector<double>& weighted_alphas) {
  std::vector<HierLossParams> v{HierLossParams::normal()};
  for (double a : weighted_alphas) v.push_back(HierLossParams::class_weighted(a));
  v.push_back(HierLossParams::proposed(2.0, 1.0));
  return v;
}

std::string run_slug(const HierLossParams& p) {
  char buf[96];
  switch (p.variant) {
    case LossVariant::normal:
      return "normal";
    case LossVariant::class_weighted:
      std::snprintf(buf, sizeof buf, "class_weighted_a%.2f", p.alpha);
      return buf;
    case LossVariant::proposed:
      std::snprintf(buf, sizeof buf, "proposed_a%.2f_b%.2f", p.alpha, p.beta);
      return buf;
  }
  return "unknown";
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Values given on the command line; unset ones leave the config untouched.
struct TrainFlags {
  std::optional<std::size_t> epochs, batch_size, eval_every;
  std::optional<double> lr, mosaic_prob;
  void apply(TrainConfig& t) const {
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (eval_every) t.eval_every = *eval_every;
    if (lr) t.lr = *lr;
    if (mosaic_prob) t.mosaic_prob = *mosaic_prob;
  }
  void add_to(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch-size", batch_size, "Images per SGD step");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--mosaic-prob", mosaic_prob, "Probability of a mosaic sample");
    cmd->add_option("--eval-every", eval_every, "Evaluate every N epochs (0: never)");
  }
};

struct Loaded {
  Dataset data;
  Taxonomy taxonomy;
};

Loaded load_data(const fs::path& dir, const std::string& taxonomy_path) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + dir.string());
  Loaded l{load(dir), {}};
  if (taxonomy_path.empty()) {
    l.taxonomy = l.data.taxonomy;
  } else {
    l.taxonomy = load_taxonomy(taxonomy_path);
    l.taxonomy.require_valid();
    for (const auto& li : l.data.images) validate_labels(li.labels, l.taxonomy.n_fine(), li.path);
  }
  return l;
}

std::vector<Anchor> training_shapes(const std::vector<LabeledImage>& images) {
  std::vector<Anchor> shapes;
  for (const auto& li : images)
    for (const auto& b : li.labels) shapes.push_back({b.box.w, b.box.h});
  return shapes;
}

DetectorConfig detector_config(const RunConfig& rc, const std::vector<LabeledImage>& train_images,
                               std::size_t n_fine) {
  if (train_images.empty()) throw ValidationError("dataset has no training images");
  std::vector<Anchor> anchors = rc.model.anchors;
  if (anchors.empty())
    anchors = kmeans_anchors(training_shapes(train_images), rc.model.anchor_count, 100,
                             rc.model.anchor_seed)
                  .anchors;
  DetectorConfig dc = DetectorConfig::make(train_images.front().image.width, n_fine, std::move(anchors));
  dc.widths = rc.model.widths;
  dc.validate();
  return dc;
}

std::string eval_csv(const DetectionEval& ev, const Taxonomy& t) {
  std::ostringstream os;
  os << "granularity,class_id,class_name,ap\n";
  for (const auto& [c, ap] : ev.fine.per_class_ap)
    os << "fine," << c << ',' << t.fine_names[c] << ',' << fmt("%.6f", ap) << '\n';
  for (const auto& [c, ap] : ev.coarse.per_class_ap)
    os << "coarse," << c << ',' << t.coarse_names[c] << ',' << fmt("%.6f", ap) << '\n';
  os << "fine,all,mAP," << fmt("%.6f", ev.fine.map50) << '\n';
  os << "coarse,all,mAP," << fmt("%.6f", ev.coarse.map50) << '\n';
  return os.str();
}

std::string eval_markdown(const DetectionEval& ev, const Taxonomy& t, double iou) {
  std::ostringstream os;
  os << "# Evaluation (mAP@" << fmt("%.2f", iou) << ")\n\n";
  os << "images " << ev.fine.n_images << ", ground truths " << ev.fine.n_gt << ", detections "
     << ev.fine.n_det << "\n\n";
  os << "| granularity | mAP |\n|---|---|\n";
  os << "| fine | " << fmt("%.4f", ev.fine.map50) << " |\n";
  os << "| coarse | " << fmt("%.4f", ev.coarse.map50) << " |\n\n";
  os << "| class | AP |\n|---|---|\n";
  for (const auto& [c, ap] : ev.fine.per_class_ap) os << "| " << t.fine_names[c] << " | " << fmt("%.4f", ap) << " |\n";
  for (const auto& [c, ap] : ev.coarse.per_class_ap)
    os << "| " << t.coarse_names[c] << " (coarse) | " << fmt("%.4f", ap) << " |\n";
  return os.str();
}

// ---- commands -------------------------------------------------------------

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.seed) rc.synth.seed = *a.seed;
  if (a.count) rc.count = *a.count;
  rc.synth.validate();
  if (rc.count < 1) throw ValidationError("count must be >= 1");
  const GenerateSummary s = generate(rc.synth, rc.count, a.out);
  out << "wrote " << a.out << ": " << s.n_images << " images (" << s.n_train << " train, " << s.n_test
      << " test), " << s.n_labels << " labels, " << s.warnings << " placement warnings\n";
  return kExitOk;
}

struct AnchorArgs {
  std::string data;
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
};

int cmd_anchors(const AnchorArgs& a, std::ostream& out) {
  const Loaded l = load_data(a.data, "");
  const AnchorSet set = kmeans_anchors(training_shapes(l.data.subset(l.data.train)), a.k, a.max_iters, a.seed);
  out << to_json(set).dump(2) << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string data, taxonomy, config, out;
  std::string loss = "proposed";
  std::optional<double> alpha, beta;
  std::optional<std::uint64_t> seed;
  TrainFlags flags;
};

HierLossParams loss_from_flags(const std::string& name, std::optional<double> alpha,
                               std::optional<double> beta, const HierLossParams& base) {
  const LossVariant v = parse_loss_variant(name);
  if (beta && v != LossVariant::proposed) throw ValidationError("--beta requires --loss proposed");
  if (alpha && v == LossVariant::normal) throw ValidationError("--alpha conflicts with --loss normal");
  HierLossParams p;
  switch (v) {
    case LossVariant::normal:
      p = HierLossParams::normal();
      break;
    case LossVariant::class_weighted:
      p = HierLossParams::class_weighted(alpha.value_or(base.variant == v ? base.alpha : 2.5));
      break;
    case LossVariant::proposed:
      p = base.variant == v ? base : HierLossParams::proposed(2.0, 1.0);
      if (alpha) p.alpha = *alpha;
      if (beta) p.beta = *beta;
      break;
  }
  p.validate();
  return p;
}

struct TrainOutcome {
  TrainResult result;
  DetectionEval final_eval;
  bool evaluated = false;
};

TrainOutcome train_and_save(const RunConfig& rc, const Loaded& l, const fs::path& out_dir,
                            std::ostream* progress) {
  rc.validate();
  const auto train_images = l.data.subset(l.data.train);
  const auto test_images = l.data.subset(l.data.test);
  const DetectorConfig dc = detector_config(rc, train_images, l.taxonomy.n_fine());
  fs::create_directories(out_dir);
  RunConfig echo = rc;
  echo.model.anchors = dc.grid.anchors;
  write_text(out_dir / "run_config.json", json(echo).dump(2) + "\n");

  TrainOutcome o;
  o.result = train(rc.train, train_images, test_images, dc, l.taxonomy, [&](const EpochMetrics& m) {
    if (!progress) return;
    *progress << "epoch " << m.epoch << " total " << fmt("%.4f", m.total);
    if (m.fine_map) *progress << " fine_map " << fmt("%.4f", *m.fine_map) << " coarse_map " << fmt("%.4f", *m.coarse_map);
    *progress << '\n';
  });
  save_checkpoint(o.result.detector, l.taxonomy.hash(), out_dir / "model.ckpt");
  write_text(out_dir / "metrics.csv", metrics_csv(o.result.log));
  if (!test_images.empty()) {
    const EpochMetrics& last = o.result.log.back();
    if (last.fine_map) {
      o.final_eval.fine.map50 = *last.fine_map;
      o.final_eval.coarse.map50 = *last.coarse_map;
    } else {
      o.final_eval = evaluate(o.result.detector, test_images, l.taxonomy, rc.train.eval);
    }
    o.evaluated = true;
  }
  return o;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  rc.train.loss = loss_from_flags(a.loss, a.alpha, a.beta, rc.train.loss);
  if (a.seed) rc.train.seed = *a.seed;
  a.flags.apply(rc.train);
  const Loaded l = load_data(a.data, a.taxonomy);
  rc.validate();
  const TrainOutcome o = train_and_save(rc, l, a.out, &out);
  out << "checkpoint " << (fs::path(a.out) / "model.ckpt").string() << '\n';
  if (o.evaluated)
    out << "final fine mAP@0.5 " << fmt("%.4f", o.final_eval.fine.map50) << " coarse mAP@0.5 "
        << fmt("%.4f", o.final_eval.coarse.map50) << '\n';
  else
    out << "no test images; skipped evaluation\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, data, taxonomy, out;
  std::string split = "test";
  double iou = 0.5;
  double conf = 0.25;
  double nms_iou = 0.5;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const Loaded l = load_data(a.data, a.taxonomy);
  if (ck.taxonomy_hash != l.taxonomy.hash())
    err << "warning: checkpoint taxonomy hash " << ck.taxonomy_hash << " differs from " << l.taxonomy.hash() << '\n';
  if (ck.detector.config.grid.n_fine != l.taxonomy.n_fine())
    throw ValidationError("checkpoint predicts " + std::to_string(ck.detector.config.grid.n_fine) +
                          " fine classes, taxonomy has " + std::to_string(l.taxonomy.n_fine()));
  std::vector<LabeledImage> images;
  if (a.split == "test")
    images = l.data.subset(l.data.test);
  else if (a.split == "train")
    images = l.data.subset(l.data.train);
  else
    images = l.data.images;
  EvalSettings settings;
  settings.iou = a.iou;
  settings.conf = a.conf;
  settings.nms_iou = a.nms_iou;
  const DetectionEval ev = evaluate(ck.detector, images, l.taxonomy, settings);
  const fs::path dir = a.out.empty() ? fs::path(a.ckpt).parent_path() : fs::path(a.out);
  if (!dir.empty()) fs::create_directories(dir);
  write_text(dir / "eval_report.csv", eval_csv(ev, l.taxonomy));
  write_text(dir / "eval_report.md", eval_markdown(ev, l.taxonomy, a.iou));
  out << "images " << images.size() << " fine mAP@" << fmt("%.2f", a.iou) << " " << fmt("%.4f", ev.fine.map50)
      << " coarse mAP@" << fmt("%.2f", a.iou) << " " << fmt("%.4f", ev.coarse.map50) << '\n';
  return kExitOk;
}

struct AblateArgs {
  std::string data, taxonomy, config, out;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> alphas;
  bool full_sweep = false;
  TrainFlags flags;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.seeds.empty()) throw ValidationError("--seeds needs at least one seed");
  if (a.full_sweep && !a.alphas.empty()) throw ValidationError("--full-sweep conflicts with --alphas");
  RunConfig base = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  a.flags.apply(base.train);
  const Loaded l = load_data(a.data, a.taxonomy);
  if (l.data.test.empty()) throw ValidationError("ablation needs test images in " + a.data);
  const std::vector<double>& alphas =
      a.full_sweep ? kFullSweepAlphas : (a.alphas.empty() ? kAblationAlphas : a.alphas);
  const auto variants = ablation_variants(alphas);
  for (const auto& v : variants) v.validate();
  base.validate();

  const fs::path root = a.out;
  fs::create_directories(root / "runs");
  std::vector<AblationRun> runs;
  std::ostringstream runs_csv;
  runs_csv << "label,seed,fine_map,coarse_map,status\n";
  for (const auto& v : variants) {
    for (std::uint64_t seed : a.seeds) {
      RunConfig rc = base;
      rc.train.loss = v;
      rc.train.seed = seed;
      AblationRun r{v.variant, v.alpha, v.beta, seed, 0.0, 0.0, false};
      const std::string label = run_label(v.variant, v.alpha, v.beta);
      const fs::path dir = root / "runs" / (run_slug(v) + "_seed" + std::to_string(seed));
      try {
        const TrainOutcome o = train_and_save(rc, l, dir, nullptr);
        r.fine_map = o.final_eval.fine.map50;
        r.coarse_map = o.final_eval.coarse.map50;
      } catch (const NumericalError& e) {
        r.failed = true;
        err << label << " seed " << seed << " failed: " << e.what() << '\n';
      } catch (const ValidationError& e) {
        r.failed = true;
        err << label << " seed " << seed << " failed: " << e.what() << '\n';
      }
      runs.push_back(r);
      runs_csv << label << ',' << seed << ',';
      if (r.failed)
        runs_csv << ",,failed\n";
      else
        runs_csv << fmt("%.6f", r.fine_map) << ',' << fmt("%.6f", r.coarse_map) << ",ok\n";
      out << label << " seed " << seed << ": ";
      if (r.failed)
        out << "failed\n";
      else
        out << "fine " << fmt("%.4f", r.fine_map) << " coarse " << fmt("%.4f", r.coarse_map) << '\n';
    }
  }
  const auto rows = ablation_rows(runs);
  write_text(root / "runs.csv", runs_csv.str());
  write_text(root / "report.csv", ablation_csv(rows));
  write_text(root / "report.md", ablation_markdown(rows));
  out << '\n' << ablation_markdown(rows);
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault, std::ostream& out, std::ostream& err) {
  if (fault == "sigmoid")
    ad::set_fault(ad::Fault::sigmoid_backward_sign);
  else if (!fault.empty())
    throw ValidationError("unknown fault '" + fault + "'");
  struct Reset {
    ~Reset() { ad::set_fault(ad::Fault::none); }
  } reset;
  const auto entries = run_gradcheck(seed);
  std::size_t failed = 0;
  out << std::left << std::setw(10) << "suite" << std::setw(28) << "op" << std::right << std::setw(12)
      << "max_rel_err" << std::setw(10) << "tol" << std::setw(9) << "kinks" << "  status\n";
  for (const auto& e : entries) {
    out << std::left << std::setw(10) << e.suite << std::setw(28) << e.op << std::right << std::setw(12)
        << fmt("%.3e", e.max_rel_error) << std::setw(10) << fmt("%.0e", e.tolerance) << std::setw(9)
        << (std::to_string(e.kinks) + "/" + std::to_string(e.checked)) << "  " << (e.passed() ? "ok" : "FAIL")
        << '\n';
    if (!e.passed()) {
      ++failed;
      err << "gradcheck failed: " << e.suite << "/" << e.op << " max rel error " << fmt("%.3e", e.max_rel_error)
          << " (tolerance " << fmt("%.0e", e.tolerance) << ", kinks " << e.kinks << "/" << e.checked << ")\n";
    }
  }
  out << entries.size() - failed << "/" << entries.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical-loss grid detector toolkit", "hdet"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  c_gen->add_option("--config", gen.config, "Run config JSON");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--seed", gen.seed, "Generator seed");
  c_gen->add_option("--count", gen.count, "Number of images");

  AnchorArgs anc;
  auto* c_anc = app.add_subcommand("anchors", "Cluster anchor shapes from a dataset");
  c_anc->add_option("--data", anc.data, "Dataset directory")->required();
  c_anc->add_option("--k", anc.k, "Number of anchors");
  c_anc->add_option("--seed", anc.seed, "Clustering seed");
  c_anc->add_option("--max-iters", anc.max_iters, "Lloyd iteration cap");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a detector");
  c_tr->add_option("--data", tr.data, "Dataset directory")->required();
  c_tr->add_option("--taxonomy", tr.taxonomy, "Taxonomy JSON (default: the dataset's)");
  c_tr->add_option("--config", tr.config, "Run config JSON");
  c_tr->add_option("--loss", tr.loss, "normal | weighted | proposed");
  c_tr->add_option("--alpha", tr.alpha, "Classification weight");
  c_tr->add_option("--beta", tr.beta, "Coarse-mismatch penalty (proposed only)");
  c_tr->add_option("--seed", tr.seed, "Training seed");
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  tr.flags.add_to(c_tr);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  c_ev->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  c_ev->add_option("--data", ev.data, "Dataset directory")->required();
  c_ev->add_option("--taxonomy", ev.taxonomy, "Taxonomy JSON (default: the dataset's)");
  c_ev->add_option("--iou", ev.iou, "Match IoU threshold");
  c_ev->add_option("--conf", ev.conf, "Score threshold");
  c_ev->add_option("--nms-iou", ev.nms_iou, "NMS IoU threshold");
  c_ev->add_option("--split", ev.split, "test | train | all")->check(CLI::IsMember({"test", "train", "all"}));
  c_ev->add_option("--out", ev.out, "Report directory (default: the checkpoint's)");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Train and evaluate every loss variant per seed");
  c_ab->add_option("--data", ab.data, "Dataset directory")->required();
  c_ab->add_option("--taxonomy", ab.taxonomy, "Taxonomy JSON (default: the dataset's)");
  c_ab->add_option("--config", ab.config, "Run config JSON");
  c_ab->add_option("--seeds", ab.seeds, "Comma-separated seeds")->delimiter(',');
  c_ab->add_option("--alphas", ab.alphas, "Comma-separated class_weighted alphas")->delimiter(',');
  c_ab->add_flag("--full-sweep", ab.full_sweep, "Use all five class_weighted alphas");
  c_ab->add_option("--out", ab.out, "Output directory")->required();
  ab.flags.add_to(c_ab);

  std::uint64_t gc_seed = 0;
  std::string gc_fault;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  c_gc->add_option("--seed", gc_seed, "Input seed");
  c_gc->add_option("--inject-fault", gc_fault)->group("");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (c_gen->parsed()) return cmd_gen(gen, out);
    if (c_anc->parsed()) return cmd_anchors(anc, out);
    if (c_tr->parsed()) return cmd_train(tr, out);
    if (c_ev->parsed()) return cmd_eval(ev, out, err);
    if (c_ab->parsed()) return cmd_ablate(ab, out, err);
    if (c_gc->parsed()) return cmd_gradcheck(gc_seed, gc_fault, out, err);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace hdet::cli
