#include <doctest.h>

#include <cmath>

#include <omp.h>

#include "hdet/data.hpp"
#include "hdet/error.hpp"
#include "hdet/train.hpp"

using namespace hdet;

namespace {

std::vector<LabeledImage> images(std::size_t n) {
  SynthConfig c;
  c.image_size = 32;
  c.cells_min = 1;
  c.cells_max = 2;
  c.radius_min = 0.12;
  c.radius_max = 0.18;
  c.seed = 4;
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synthesize_image(c, i));
  return out;
}

DetectorConfig tiny() {
  DetectorConfig c = DetectorConfig::make(32, 12, {{0.25, 0.25}, {0.35, 0.3}});
  c.widths = {4, 4, 8, 8};
  return c;
}

TrainConfig quick() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 3;
  c.mosaic_prob = 0.5;
  c.eval_every = 1;
  c.loss = HierLossParams::proposed(2.0, 1.0);
  return c;
}

}  // namespace

TEST_CASE("train config validation and json") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ValidationError);
  };
  bad([](TrainConfig& c) { c.epochs = 0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.lr = -1.0; });
  bad([](TrainConfig& c) { c.momentum = 1.0; });
  bad([](TrainConfig& c) { c.mosaic_prob = 1.5; });
  bad([](TrainConfig& c) { c.box_gain = 0.0; });
  bad([](TrainConfig& c) { c.cls_gain = -1.0; });
  bad([](TrainConfig& c) { c.grad_clip = -1.0; });
  bad([](TrainConfig& c) { c.eval.conf = 1.0; });
  bad([](TrainConfig& c) { c.loss = HierLossParams{0.5, 1.0, LossVariant::proposed}; });

  TrainConfig c = quick();
  c.lr = 0.0;
  c.seed = 7;
  const nlohmann::json j = c;
  CHECK(nlohmann::json(j.get<TrainConfig>()) == j);
  CHECK(nlohmann::json{{"epochs", 3}}.get<TrainConfig>().batch_size == TrainConfig{}.batch_size);
  CHECK_THROWS_AS(nlohmann::json({{"epochs", "many"}}).get<TrainConfig>(), ValidationError);
}

TEST_CASE("sgd step and gradient clipping") {
  std::vector<NamedTensor> p{{"w", ad::Shape{2}, {1.0, 2.0}}};
  std::vector<std::vector<double>> v{{0.0, 0.0}};
  const std::vector<std::vector<double>> g{{1.0, -1.0}};
  sgd_step(p, v, g, 0.1, 0.9);
  CHECK(p[0].data == std::vector<double>{0.9, 2.1});
  sgd_step(p, v, g, 0.1, 0.9);
  CHECK(v[0][0] == doctest::Approx(1.9));
  CHECK(p[0].data[0] == doctest::Approx(0.71));

  std::vector<std::vector<double>> grads{{3.0}, {4.0}};
  CHECK(clip_grad_norm(grads, 0.0) == 5.0);
  CHECK(grads[1][0] == 4.0);
  CHECK(clip_grad_norm(grads, 1.0) == 5.0);
  CHECK(grads[0][0] == doctest::Approx(0.6));
  CHECK(grads[1][0] == doctest::Approx(0.8));
}

TEST_CASE("metrics csv") {
  std::vector<EpochMetrics> log{{1, 1.0, 2.0, 3.0, 9.0, {}, {}}, {2, 0.5, 1.0, 1.5, 4.5, 0.25, 0.5}};
  CHECK(metrics_csv(log) ==
        "epoch,box,obj,cls,total,fine_map,coarse_map\n"
        "1,1.000000,2.000000,3.000000,9.000000,,\n"
        "2,0.500000,1.000000,1.500000,4.500000,0.250000,0.500000\n");
}

TEST_CASE("zero learning rate leaves the weights untouched") {
  const auto data = images(4);
  TrainConfig c = quick();
  c.lr = 0.0;
  const Taxonomy tax = Taxonomy::series_stage(4, 3);
  const TrainResult r = train(c, data, {}, tiny(), tax);
  const Detector init = Detector::init(tiny(), c.seed);
  for (std::size_t i = 0; i < init.params.size(); ++i) CHECK(r.detector.params[i].data == init.params[i].data);
  REQUIRE(r.log.size() == 2);
  CHECK_FALSE(r.log[0].fine_map.has_value());
}

TEST_CASE("training is reproducible and thread-count invariant") {
  const auto data = images(6);
  const Taxonomy tax = Taxonomy::series_stage(4, 3);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const TrainResult a = train(quick(), data, data, tiny(), tax);
  omp_set_num_threads(3);
  const TrainResult b = train(quick(), data, data, tiny(), tax);
  omp_set_num_threads(saved);
  CHECK(metrics_csv(a.log) == metrics_csv(b.log));
  for (std::size_t i = 0; i < a.detector.params.size(); ++i) CHECK(a.detector.params[i].data == b.detector.params[i].data);
  REQUIRE(a.log.size() == 2);
  CHECK(a.log[1].fine_map.has_value());
  for (const auto& m : a.log) CHECK(m.total == doctest::Approx(m.box + m.obj + 2.0 * m.cls));

  TrainConfig other = quick();
  other.seed = 1;
  CHECK(metrics_csv(train(other, data, {}, tiny(), tax).log) != metrics_csv(a.log));
}

TEST_CASE("training lowers the loss on a single image") {
  const auto data = images(1);
  TrainConfig c;
  c.epochs = 40;
  c.batch_size = 1;
  c.mosaic_prob = 0.0;
  c.eval_every = 0;
  const TrainResult r = train(c, data, {}, tiny(), Taxonomy::series_stage(4, 3));
  CHECK(r.log.back().total < 0.5 * r.log.front().total);
}

TEST_CASE("train rejects mismatched inputs") {
  const Taxonomy tax = Taxonomy::series_stage(4, 3);
  CHECK_THROWS_AS(train(quick(), {}, {}, tiny(), tax), ValidationError);
  CHECK_THROWS_AS(train(quick(), images(2), {}, tiny(), Taxonomy::identity(5)), ValidationError);
  auto big = images(1);
  big[0].image = Image(48, 48);
  CHECK_THROWS_AS(train(quick(), big, {}, tiny(), tax), ValidationError);
}

TEST_CASE("zero beta trains exactly like class weighting") {
  const auto data = images(5);
  const Taxonomy tax = Taxonomy::series_stage(4, 3);
  TrainConfig a = quick(), b = quick();
  a.loss = HierLossParams::proposed(2.5, 0.0);
  b.loss = HierLossParams::class_weighted(2.5);
  const TrainResult ra = train(a, data, data, tiny(), tax), rb = train(b, data, data, tiny(), tax);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) CHECK(std::abs(ra.log[i].total - rb.log[i].total) <= 1e-9);
  CHECK(ra.detector.params.back().data == rb.detector.params.back().data);
}

TEST_CASE("loss falls over the first five epochs on default scenes") {
  std::vector<LabeledImage> data;
  for (std::size_t i = 0; i < 48; ++i) data.push_back(synthesize_image(SynthConfig{}, i));
  TrainConfig c;
  c.epochs = 5;
  c.eval_every = 0;
  const TrainResult r = train(c, data, {}, DetectorConfig::make(96, 12, {{0.14, 0.14}, {0.18, 0.16}, {0.17, 0.2}}),
                              Taxonomy::series_stage(4, 3));
  CHECK(r.log[4].total < r.log[0].total);
}
