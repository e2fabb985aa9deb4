#include "hdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <tuple>

#include "hdet/error.hpp"

namespace hdet {

double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    if (ranked_tp[i]) ++tp;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  // sentinels, then the monotone precision envelope from the right
  recall.insert(recall.begin(), 0.0);
  recall.push_back(1.0);
  precision.insert(precision.begin(), 0.0);
  precision.push_back(0.0);
  for (std::size_t i = precision.size() - 1; i-- > 0;)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < recall.size(); ++i)
    if (recall[i] != recall[i - 1]) ap += (recall[i] - recall[i - 1]) * precision[i];
  return ap;
}

EvalReport match_and_ap(const DetectionsPerImage& dets, const TruthsPerImage& gts,
                        std::size_t class_count, double iou_thr) {
  if (dets.size() != gts.size())
    throw ValidationError("match_and_ap: detections for " + std::to_string(dets.size()) +
                          " images but truths for " + std::to_string(gts.size()));
  EvalReport rep;
  rep.n_images = gts.size();

  struct Ranked {
    std::size_t image, order;
    const ScoredBox* det;
  };
  std::vector<std::vector<Ranked>> by_class(class_count);
  std::vector<std::size_t> gt_count(class_count, 0);
  for (std::size_t img = 0; img < gts.size(); ++img) {
    for (const auto& g : gts[img]) {
      if (g.cls >= class_count) throw ValidationError("ground-truth class out of range");
      ++gt_count[g.cls];
      ++rep.n_gt;
    }
    for (std::size_t k = 0; k < dets[img].size(); ++k) {
      const auto& d = dets[img][k];
      if (d.cls >= class_count) throw ValidationError("detection class out of range");
      by_class[d.cls].push_back({img, k, &d});
      ++rep.n_det;
    }
  }

  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    if (gt_count[c] == 0) continue;
    auto& ranked = by_class[c];
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.det->score != b.det->score) return a.det->score > b.det->score;
      return std::tie(a.image, a.order) < std::tie(b.image, b.order);
    });
    std::vector<std::vector<bool>> used(gts.size());
    for (std::size_t img = 0; img < gts.size(); ++img) used[img].assign(gts[img].size(), false);
    std::vector<bool> tp;
    tp.reserve(ranked.size());
    for (const auto& r : ranked) {
      const auto& truths = gts[r.image];
      std::size_t best = truths.size();
      double best_iou = -1.0;
      for (std::size_t g = 0; g < truths.size(); ++g) {
        if (truths[g].cls != c || used[r.image][g]) continue;
        const double v = iou(r.det->box, truths[g].box);
        if (v >= iou_thr && v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best < truths.size()) used[r.image][best] = true;
      tp.push_back(best < truths.size());
    }
    const double ap = average_precision(tp, gt_count[c]);
    rep.per_class_ap[c] = ap;
    sum += ap;
    ++counted;
  }
  rep.map50 = counted ? sum / static_cast<double>(counted) : 0.0;
  return rep;
}

EvalReport eval_coarse(const DetectionsPerImage& dets, const TruthsPerImage& gts,
                       const Taxonomy& taxonomy, double iou_thr) {
  DetectionsPerImage cd = dets;
  TruthsPerImage cg = gts;
  for (auto& img : cd)
    for (auto& d : img) d.cls = taxonomy.to_coarse(d.cls);
  for (auto& img : cg)
    for (auto& g : img) g.cls = taxonomy.to_coarse(g.cls);
  EvalReport rep = match_and_ap(cd, cg, taxonomy.n_coarse(), iou_thr);
  rep.granularity = Granularity::coarse;
  return rep;
}

std::vector<std::vector<std::size_t>> coarse_confusion(const DetectionsPerImage& dets,
                                                       const TruthsPerImage& gts,
                                                       const Taxonomy& taxonomy, double iou_thr) {
  const std::size_t nc = taxonomy.n_coarse();
  std::vector<std::vector<std::size_t>> m(nc, std::vector<std::size_t>(nc + 1, 0));
  for (std::size_t img = 0; img < gts.size() && img < dets.size(); ++img)
    for (const auto& g : gts[img]) {
      const ScoredBox* best = nullptr;
      double best_iou = iou_thr;
      for (const auto& d : dets[img]) {
        const double v = iou(d.box, g.box);
        if (v >= best_iou) {
          best_iou = v;
          best = &d;
        }
      }
      m[taxonomy.to_coarse(g.cls)][best ? taxonomy.to_coarse(best->cls) : nc] += 1;
    }
  return m;
}

std::string run_label(LossVariant variant, double alpha, double beta) {
  char buf[96];
  switch (variant) {
    case LossVariant::normal: return "normal";
    case LossVariant::class_weighted:
      std::snprintf(buf, sizeof buf, "class_weighted a=%.2f", alpha);
      return buf;
    case LossVariant::proposed:
      std::snprintf(buf, sizeof buf, "proposed a=%.2f b=%.2f", alpha, beta);
      return buf;
  }
  return "?";
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = sd = 0.0;
  if (xs.empty()) {
    mean = sd = std::nan("");
    return;
  }
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::vector<AblationRow> ablation_rows(const std::vector<AblationRun>& runs) {
  std::vector<AblationRow> rows;
  std::vector<std::vector<const AblationRun*>> members;
  for (const auto& r : runs) {
    const std::string label = run_label(r.variant, r.alpha, r.beta);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AblationRow& row) { return row.label == label; });
    if (it == rows.end()) {
      AblationRow row;
      row.label = label;
      row.variant = r.variant;
      row.alpha = r.variant == LossVariant::normal ? 1.0 : r.alpha;
      row.beta = r.variant == LossVariant::proposed ? r.beta : 0.0;
      rows.push_back(row);
      members.emplace_back();
      it = rows.end() - 1;
    }
    members[static_cast<std::size_t>(it - rows.begin())].push_back(&r);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> fine, coarse;
    for (const AblationRun* r : members[i]) {
      if (r->failed) {
        ++rows[i].failed;
        continue;
      }
      fine.push_back(r->fine_map);
      coarse.push_back(r->coarse_map);
    }
    rows[i].seed_count = fine.size();
    mean_std(fine, rows[i].fine_map_mean, rows[i].fine_map_std);
    mean_std(coarse, rows[i].coarse_map_mean, rows[i].coarse_map_std);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
    return std::tuple(static_cast<int>(a.variant), a.alpha, a.beta) <
           std::tuple(static_cast<int>(b.variant), b.alpha, b.beta);
  });
  return rows;
}

namespace {
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
std::string row_label(const AblationRow& r) {
  return r.failed ? r.label + " (" + std::to_string(r.failed) + " failed)" : r.label;
}
}  // namespace

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "label,seed_count,fine_map_mean,fine_map_std,coarse_map_mean,coarse_map_std\n";
  for (const auto& r : rows)
    os << row_label(r) << ',' << r.seed_count << ',' << fmt(r.fine_map_mean) << ','
       << fmt(r.fine_map_std) << ',' << fmt(r.coarse_map_mean) << ',' << fmt(r.coarse_map_std) << '\n';
  return os.str();
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| label | seed_count | fine_map_mean | fine_map_std | coarse_map_mean | coarse_map_std |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows)
    os << "| " << row_label(r) << " | " << r.seed_count << " | " << fmt(r.fine_map_mean) << " | "
       << fmt(r.fine_map_std) << " | " << fmt(r.coarse_map_mean) << " | " << fmt(r.coarse_map_std)
       << " |\n";
  return os.str();
}

}  // namespace hdet
