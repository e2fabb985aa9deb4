#include "hdet/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "hdet/error.hpp"
#include "hdet/rng.hpp"

namespace hdet {

using json = nlohmann::json;

void EvalSettings::validate() const {
  if (!(conf >= 0.0 && conf < 1.0)) throw ValidationError("eval.conf must be in [0, 1)");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ValidationError("eval.nms_iou must be in (0, 1]");
  if (!(iou > 0.0 && iou <= 1.0)) throw ValidationError("eval.iou must be in (0, 1]");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("train.lr must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("train.momentum must be in [0, 1)");
  if (!(mosaic_prob >= 0.0 && mosaic_prob <= 1.0))
    throw ValidationError("train.mosaic_prob must be in [0, 1]");
  if (!(box_gain > 0.0) || !std::isfinite(box_gain))
    throw ValidationError("train.box_gain must be a finite value > 0");
  if (!(cls_gain > 0.0) || !std::isfinite(cls_gain))
    throw ValidationError("train.cls_gain must be a finite value > 0");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip))
    throw ValidationError("train.grad_clip must be a finite value >= 0");
  loss.validate();
  eval.validate();
}

void to_json(json& j, const HierLossParams& p) {
  j = json{{"variant", to_string(p.variant)}, {"alpha", p.alpha}, {"beta", p.beta}};
}

void from_json(const json& j, HierLossParams& p) {
  try {
    if (j.contains("variant")) {
      p.variant = parse_loss_variant(j.at("variant").get<std::string>());
      if (p.variant == LossVariant::normal) p = HierLossParams::normal();
      if (p.variant == LossVariant::class_weighted) p.beta = 0.0;
    }
    p.alpha = j.value("alpha", p.alpha);
    p.beta = j.value("beta", p.beta);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("loss config: ") + e.what());
  }
}

void to_json(json& j, const EvalSettings& e) {
  j = json{{"conf", e.conf}, {"nms_iou", e.nms_iou}, {"iou", e.iou}};
}

void from_json(const json& j, EvalSettings& e) {
  try {
    e.conf = j.value("conf", e.conf);
    e.nms_iou = j.value("nms_iou", e.nms_iou);
    e.iou = j.value("iou", e.iou);
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("eval config: ") + ex.what());
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr", c.lr},
           {"momentum", c.momentum},
           {"seed", c.seed},
           {"mosaic_prob", c.mosaic_prob},
           {"grad_clip", c.grad_clip},
           {"box_gain", c.box_gain},
           {"cls_gain", c.cls_gain},
           {"loss", c.loss},
           {"eval_every", c.eval_every},
           {"eval", c.eval}};
}

void from_json(const json& j, TrainConfig& c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    c.mosaic_prob = j.value("mosaic_prob", c.mosaic_prob);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.box_gain = j.value("box_gain", c.box_gain);
    c.cls_gain = j.value("cls_gain", c.cls_gain);
    if (j.contains("loss")) j.at("loss").get_to(c.loss);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("eval")) j.at("eval").get_to(c.eval);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::ostringstream os;
  os << "epoch,box,obj,cls,total,fine_map,coarse_map\n";
  char buf[256];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,", m.epoch, m.box, m.obj, m.cls, m.total);
    os << buf;
    if (m.fine_map) {
      std::snprintf(buf, sizeof buf, "%.6f", *m.fine_map);
      os << buf;
    }
    os << ',';
    if (m.coarse_map) {
      std::snprintf(buf, sizeof buf, "%.6f", *m.coarse_map);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

namespace {

void require_size(const Detector& det, const LabeledImage& li, const char* what) {
  const std::size_t n = det.config.image_size;
  if (li.image.width != n || li.image.height != n)
    throw ValidationError(std::string(what) + " image " + li.path + " is " +
                          std::to_string(li.image.width) + "x" + std::to_string(li.image.height) +
                          ", model expects " + std::to_string(n));
}

}  // namespace

DetectionEval evaluate(const Detector& det, std::span<const LabeledImage> images,
                       const Taxonomy& taxonomy, const EvalSettings& settings) {
  settings.validate();
  for (const auto& li : images) require_size(det, li, "eval");
  DetectionsPerImage dets(images.size());
  TruthsPerImage gts(images.size());
  std::vector<std::exception_ptr> errors(images.size());
  const auto n = static_cast<long>(images.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      dets[i] = predict(det, images[i].image, settings.conf, settings.nms_iou);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < images.size(); ++i) gts[i] = images[i].labels;
  return {match_and_ap(dets, gts, taxonomy.n_fine(), settings.iou),
          eval_coarse(dets, gts, taxonomy, settings.iou)};
}

double clip_grad_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= f;
  }
  return norm;
}

void sgd_step(std::vector<NamedTensor>& params, std::vector<std::vector<double>>& velocity,
              const std::vector<std::vector<double>>& grads, double lr, double momentum) {
  if (velocity.size() != params.size()) {
    velocity.clear();
    for (const auto& p : params) velocity.emplace_back(p.data.size(), 0.0);
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t].data;
    auto& v = velocity[t];
    const auto& g = grads[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

namespace {

struct Sample {
  std::size_t index = 0;
  bool mosaic = false;
  std::array<std::size_t, 3> partners{};
  std::uint64_t mosaic_seed = 0;
};

struct SampleResult {
  std::vector<std::vector<double>> grads;
  double box = 0.0, obj = 0.0, cls = 0.0, total = 0.0;
  std::exception_ptr error;
};

SampleResult run_sample(const Detector& det, const LabeledImage& li, const Taxonomy& taxonomy,
                        const HierLossParams& params, double box_gain, double cls_gain) {
  SampleResult r;
  ad::Tape tape;
  const auto pass = forward(tape, det, to_planar(li.image), true);
  const auto lb = total_loss(pass.head, li.labels, det.config.grid, taxonomy, params);
  if (box_gain == 1.0 && cls_gain == 1.0)
    tape.backward(lb.total);
  else
    tape.backward(ad::add(ad::add(ad::scale(lb.box_term, box_gain), lb.obj_term),
                          ad::scale(lb.cls_term, cls_gain * params.effective_alpha())));
  r.box = lb.box;
  r.obj = lb.obj;
  r.cls = lb.cls;
  r.total = lb.total_value;
  for (const auto& p : pass.params) {
    const auto g = p.grad();
    r.grads.emplace_back(g.begin(), g.end());
    if (r.grads.back().empty()) r.grads.back().assign(p.numel(), 0.0);
  }
  return r;
}

void keep_heap() {
#if defined(__GLIBC__)
  // keep large tape buffers on the heap between images
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
    return true;
  }();
  (void)once;
#endif
}

std::string describe(std::size_t epoch, std::size_t batch, const SampleResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch %zu batch %zu: box=%g obj=%g cls=%g total=%g", epoch,
                batch, r.box, r.obj, r.cls, r.total);
  return buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> eval_set, const DetectorConfig& model,
                  const Taxonomy& taxonomy,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  model.validate();
  taxonomy.require_valid();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (taxonomy.n_fine() != model.grid.n_fine)
    throw ValidationError("train: taxonomy has " + std::to_string(taxonomy.n_fine()) +
                          " fine classes, model head has " + std::to_string(model.grid.n_fine));
  keep_heap();

  TrainResult out;
  out.detector = Detector::init(model, cfg.seed);
  Detector& det = out.detector;
  for (const auto& li : train_set) {
    require_size(det, li, "train");
    validate_labels(li.labels, taxonomy.n_fine(), "train " + li.path);
  }

  Rng rng = Rng::substream(cfg.seed, 1);
  std::vector<std::vector<double>> velocity;
  const std::size_t n = train_set.size();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    std::vector<Sample> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample& s = samples[i];
      s.index = order[i];
      s.mosaic = cfg.mosaic_prob > 0.0 && rng.bernoulli(cfg.mosaic_prob);
      if (s.mosaic) {
        for (auto& p : s.partners) p = rng.below(n);
        s.mosaic_seed = rng.next();
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t b0 = 0, batch = 1; b0 < n; b0 += cfg.batch_size, ++batch) {
      const std::size_t bn = std::min(cfg.batch_size, n - b0);
      std::vector<SampleResult> results(bn);
#pragma omp parallel for schedule(dynamic)
      for (long k = 0; k < static_cast<long>(bn); ++k) {
        const Sample& s = samples[b0 + static_cast<std::size_t>(k)];
        try {
          if (s.mosaic) {
            const std::vector<LabeledImage> four{train_set[s.index], train_set[s.partners[0]],
                                                 train_set[s.partners[1]], train_set[s.partners[2]]};
            results[k] = run_sample(det, mosaic(four, det.config.image_size, s.mosaic_seed),
                                    taxonomy, cfg.loss, cfg.box_gain, cfg.cls_gain);
          } else {
            results[k] = run_sample(det, train_set[s.index], taxonomy, cfg.loss, cfg.box_gain, cfg.cls_gain);
          }
        } catch (...) {
          results[k].error = std::current_exception();
        }
      }

      std::vector<std::vector<double>> grads;
      for (const auto& p : det.params) grads.emplace_back(p.data.size(), 0.0);
      for (auto& r : results) {
        if (r.error) {
          try {
            std::rethrow_exception(r.error);
          } catch (const NumericalError& e) {
            throw NumericalError(describe(epoch, batch, r) + ": " + e.what());
          }
        }
        for (std::size_t t = 0; t < grads.size(); ++t)
          for (std::size_t i = 0; i < grads[t].size(); ++i) grads[t][i] += r.grads[t][i];
        m.box += r.box;
        m.obj += r.obj;
        m.cls += r.cls;
        m.total += r.total;
      }
      const double inv = 1.0 / static_cast<double>(bn);
      for (std::size_t t = 0; t < grads.size(); ++t)
        for (double& g : grads[t]) {
          g *= inv;
          if (!std::isfinite(g))
            throw NumericalError("epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch) + ": non-finite gradient in " +
                                 det.params[t].name);
        }
      clip_grad_norm(grads, cfg.grad_clip);
      sgd_step(det.params, velocity, grads, cfg.lr, cfg.momentum);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    m.box *= inv_n;
    m.obj *= inv_n;
    m.cls *= inv_n;
    m.total *= inv_n;

    const bool eval_now = cfg.eval_every > 0 && !eval_set.empty() &&
                          (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
    if (eval_now) {
      const auto ev = evaluate(det, eval_set, taxonomy, cfg.eval);
      m.fine_map = ev.fine.map50;
      m.coarse_map = ev.coarse.map50;
    }
    out.log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return out;
}

}  // namespace hdet
