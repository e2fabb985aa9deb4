#include <doctest.h>

#include <cmath>

#include "hdet/eval.hpp"
#include "hdet/rng.hpp"

using namespace hdet;

TEST_CASE("average precision examples") {
  CHECK(average_precision({true, true}, 2) == 1.0);
  CHECK(average_precision({false, true}, 1) == doctest::Approx(0.5));
  CHECK(average_precision({true, false, true}, 2) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
  CHECK(average_precision({true}, 2) == doctest::Approx(0.5));
  CHECK(average_precision({}, 3) == 0.0);
  CHECK(average_precision({false, false}, 1) == 0.0);
}

TEST_CASE("matching") {
  const BBox g{0.5, 0.5, 0.2, 0.2};
  const TruthsPerImage gts{{{0, g}}};
  // duplicate detections: the lower-scored one is a false positive
  EvalReport r = match_and_ap({{{g, 0, 0.9}, {g, 0, 0.8}}}, gts, 2);
  CHECK(r.per_class_ap.size() == 1);
  CHECK(r.map50 == 1.0);
  r = match_and_ap({{{g, 0, 0.8}, {g, 0, 0.9}, {{0.1, 0.1, 0.05, 0.05}, 0, 0.95}}}, gts, 2);
  CHECK(r.map50 == doctest::Approx(0.5));
  CHECK(r.n_det == 3);
  // wrong class never matches
  CHECK(match_and_ap({{{g, 1, 0.9}}}, gts, 2).map50 == 0.0);
  // below the IoU threshold
  CHECK(match_and_ap({{{{0.6, 0.5, 0.2, 0.2}, 0, 0.9}}}, gts, 2, 0.5).map50 == 0.0);
  CHECK(match_and_ap({{{{0.6, 0.5, 0.2, 0.2}, 0, 0.9}}}, gts, 2, 0.3).map50 == 1.0);
  // no ground truth anywhere
  CHECK(match_and_ap({{}}, {{}}, 2).per_class_ap.empty());
}

TEST_CASE("identity coarse report equals the fine report") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    DetectionsPerImage d(4);
    TruthsPerImage g(4);
    for (std::size_t i = 0; i < 4; ++i) {
      for (int k = 0; k < 3; ++k)
        g[i].push_back({static_cast<std::size_t>(rng.below(3)),
                        {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)}});
      for (int k = 0; k < 5; ++k)
        d[i].push_back({{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)},
                        static_cast<std::size_t>(rng.below(3)),
                        rng.uniform()});
    }
    EvalReport fine = match_and_ap(d, g, 3);
    EvalReport coarse = eval_coarse(d, g, Taxonomy::identity(3));
    CHECK(coarse.granularity == Granularity::coarse);
    coarse.granularity = Granularity::fine;
    CHECK(coarse == fine);
  }
}

TEST_CASE("coarse evaluation forgives within-group confusion") {
  const Taxonomy t{{"a", "b", "c"}, {"ab", "c"}, {0, 0, 1}};
  const BBox g{0.5, 0.5, 0.2, 0.2};
  const DetectionsPerImage d{{{g, 1, 0.9}}};
  const TruthsPerImage gt{{{0, g}}};
  CHECK(match_and_ap(d, gt, 3).map50 == 0.0);
  CHECK(eval_coarse(d, gt, t).map50 == 1.0);
  const auto conf = coarse_confusion(d, gt, t);
  REQUIRE(conf.size() == 2);
  CHECK(conf[0] == std::vector<std::size_t>{1, 0, 0});
}

TEST_CASE("ablation rows") {
  std::vector<AblationRun> runs{
      {LossVariant::proposed, 2.0, 1.0, 0, 0.4, 0.6, false}, {LossVariant::normal, 1.0, 0.0, 0, 0.2, 0.3, false},
      {LossVariant::normal, 1.0, 0.0, 1, 0.4, 0.5, false},   {LossVariant::class_weighted, 2.5, 0.0, 0, 0.3, 0.4, false},
      {LossVariant::proposed, 2.0, 1.0, 1, 0.0, 0.0, true}};
  const auto rows = ablation_rows(runs);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].label == "normal");
  CHECK(rows[1].label == "class_weighted a=2.50");
  CHECK(rows[2].label == "proposed a=2.00 b=1.00");
  CHECK(rows[0].fine_map_mean == doctest::Approx(0.3));
  CHECK(rows[0].fine_map_std == doctest::Approx(std::sqrt(0.02)));
  CHECK(rows[2].seed_count == 1);
  CHECK(rows[2].failed == 1);
  CHECK(rows[2].coarse_map_std == 0.0);
  const std::string csv = ablation_csv(rows);
  CHECK(csv.find("normal") != std::string::npos);
  CHECK(ablation_markdown(rows).find('|') != std::string::npos);
}
