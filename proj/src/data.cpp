#include "hdet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hdet/error.hpp"
#include "hdet/rng.hpp"

namespace hdet {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("synth." + field + ": " + why);
  };
  if (n_series < 1) fail("n_series", "must be >= 1");
  if (n_stages < 1) fail("n_stages", "must be >= 1");
  if (image_size < 16) fail("image_size", "must be >= 16");
  if (cells_min > cells_max) fail("cells_per_image", "min > max");
  if (!(radius_min > 0.0 && radius_max < 0.5 && radius_min <= radius_max))
    fail("radius_range", "must satisfy 0 < min <= max < 0.5");
  if (!(overlap_max >= 0.0 && overlap_max <= 1.0)) fail("overlap_max", "must be in [0,1]");
  if (!(stage_similarity > 0.0 && stage_similarity <= 1.0))
    fail("stage_similarity", "must be in (0,1]");
  if (!(appearance_jitter >= 0.0)) fail("appearance_jitter", "must be >= 0");
  if (!(noise_std >= 0.0)) fail("noise_std", "must be >= 0");
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"n_series", c.n_series},
           {"n_stages", c.n_stages},
           {"image_size", c.image_size},
           {"cells_per_image", {c.cells_min, c.cells_max}},
           {"radius_range", {c.radius_min, c.radius_max}},
           {"overlap_max", c.overlap_max},
           {"stage_similarity", c.stage_similarity},
           {"appearance_jitter", c.appearance_jitter},
           {"noise_std", c.noise_std},
           {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  try {
    c.n_series = j.value("n_series", c.n_series);
    c.n_stages = j.value("n_stages", c.n_stages);
    c.image_size = j.value("image_size", c.image_size);
    if (j.contains("cells_per_image")) {
      c.cells_min = j.at("cells_per_image").at(0).get<std::size_t>();
      c.cells_max = j.at("cells_per_image").at(1).get<std::size_t>();
    }
    if (j.contains("radius_range")) {
      c.radius_min = j.at("radius_range").at(0).get<double>();
      c.radius_max = j.at("radius_range").at(1).get<double>();
    }
    c.overlap_max = j.value("overlap_max", c.overlap_max);
    c.stage_similarity = j.value("stage_similarity", c.stage_similarity);
    c.appearance_jitter = j.value("appearance_jitter", c.appearance_jitter);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth config: ") + e.what());
  }
}

void validate_labels(const std::vector<LabeledBox>& labels, std::size_t n_fine,
                     const std::string& where) {
  constexpr double eps = 1e-9;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    const auto& b = l.box;
    const std::string tag = where + " box " + std::to_string(i);
    if (l.cls >= n_fine)
      throw ValidationError(tag + ": class " + std::to_string(l.cls) + " not in taxonomy");
    if (!(b.w > 0.0) || !(b.h > 0.0)) throw ValidationError(tag + ": non-positive extent");
    if (!(b.x1() >= -eps && b.y1() >= -eps && b.x2() <= 1.0 + eps && b.y2() <= 1.0 + eps))
      throw ValidationError(tag + ": box outside [0,1]^2 (cx=" + std::to_string(b.cx) +
                            ", cy=" + std::to_string(b.cy) + ")");
  }
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv(double hue_deg, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(hue_deg, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb out{0, 0, 0};
  if (hp < 1) out = {c, x, 0};
  else if (hp < 2) out = {x, c, 0};
  else if (hp < 3) out = {0, c, x};
  else if (hp < 4) out = {0, x, c};
  else if (hp < 5) out = {x, 0, c};
  else out = {c, 0, x};
  const double m = v - c;
  return {255.0 * (out.r + m), 255.0 * (out.g + m), 255.0 * (out.b + m)};
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct Cell {
  std::size_t cls;
  double cx, cy, rx, ry;
  double appearance;  // stage scalar after jitter, in [0,1]
};

constexpr std::size_t kPlacementAttempts = 64;

}  // namespace

LabeledImage synthesize_image(const SynthConfig& cfg, std::size_t index, std::size_t* warnings) {
  Rng rng = Rng::substream(cfg.seed, index);
  const std::size_t n_fine = cfg.n_fine();
  const std::size_t target =
      cfg.cells_min + static_cast<std::size_t>(rng.below(cfg.cells_max - cfg.cells_min + 1));
  // adjacent stages are (1 - stage_similarity) / (n_stages - 1) apart on [0, 1]
  const double stage_step =
      cfg.n_stages > 1 ? (1.0 - cfg.stage_similarity) / static_cast<double>(cfg.n_stages - 1) : 0.0;

  std::vector<Cell> cells;
  for (std::size_t n = 0; n < target; ++n) {
    const std::size_t cls = rng.below(n_fine);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double r = rng.uniform(cfg.radius_min, cfg.radius_max);
      const double ecc = rng.uniform(-0.15, 0.15);
      const double rx = r * (1.0 + ecc), ry = r * (1.0 - ecc);
      const double cx = rng.uniform(rx, 1.0 - rx);
      const double cy = rng.uniform(ry, 1.0 - ry);
      const bool clear = std::all_of(cells.begin(), cells.end(), [&](const Cell& o) {
        const double d = std::hypot(cx - o.cx, cy - o.cy);
        const double reach = 0.5 * (rx + ry) + 0.5 * (o.rx + o.ry);
        return 1.0 - d / reach <= cfg.overlap_max;
      });
      if (!clear) continue;
      const double stage = static_cast<double>(cls % cfg.n_stages);
      const double a = std::clamp(0.5 - 0.5 * (1.0 - cfg.stage_similarity) + stage * stage_step +
                                      cfg.appearance_jitter * rng.normal(),
                                  0.0, 1.0);
      cells.push_back({cls, cx, cy, rx, ry, a});
      placed = true;
    }
    if (!placed && warnings) ++*warnings;
  }

  const std::size_t size = cfg.image_size;
  Image img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      std::uint8_t* px = img.at(x, y);
      px[0] = to_u8(236.0 + cfg.noise_std * rng.normal());
      px[1] = to_u8(226.0 + cfg.noise_std * rng.normal());
      px[2] = to_u8(232.0 + cfg.noise_std * rng.normal());
    }

  LabeledImage out;
  const auto fsize = static_cast<double>(size);
  for (const Cell& c : cells) {
    const std::size_t series = c.cls / cfg.n_stages;
    const double hue = 360.0 * static_cast<double>(series) / static_cast<double>(cfg.n_series);
    const Rgb cyto = hsv(hue, 0.30, 0.90);
    const Rgb nucleus = hsv(hue, 0.55 + 0.3 * c.appearance, 0.80 - 0.55 * c.appearance);
    const double inner = 0.35 + 0.4 * c.appearance;  // nucleus / cell radius
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor((c.cx - c.rx) * fsize)));
    const auto x1 = static_cast<std::size_t>(std::min(fsize, std::ceil((c.cx + c.rx) * fsize)));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor((c.cy - c.ry) * fsize)));
    const auto y1 = static_cast<std::size_t>(std::min(fsize, std::ceil((c.cy + c.ry) * fsize)));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) {
        const double u = ((static_cast<double>(x) + 0.5) / fsize - c.cx) / c.rx;
        const double v = ((static_cast<double>(y) + 0.5) / fsize - c.cy) / c.ry;
        const double q = u * u + v * v;
        if (q > 1.0) continue;
        const Rgb& col = q <= inner * inner ? nucleus : cyto;
        std::uint8_t* px = img.at(x, y);
        px[0] = to_u8(col.r + 0.5 * cfg.noise_std * rng.normal());
        px[1] = to_u8(col.g + 0.5 * cfg.noise_std * rng.normal());
        px[2] = to_u8(col.b + 0.5 * cfg.noise_std * rng.normal());
      }
    out.labels.push_back({c.cls, BBox{c.cx, c.cy, 2.0 * c.rx, 2.0 * c.ry}});
  }
  out.image = std::move(img);
  return out;
}

bool is_test_id(std::size_t id) { return id % 6 == 5; }

namespace {

std::string image_name(std::size_t id) {
  std::ostringstream os;
  os << "imgs/" << std::setw(6) << std::setfill('0') << id << ".ppm";
  return os.str();
}

ordered_json labels_line(const LabeledImage& img) {
  ordered_json boxes = ordered_json::array();
  for (const auto& l : img.labels)
    boxes.push_back(ordered_json{{"cls", l.cls},
                                 {"cx", l.box.cx},
                                 {"cy", l.box.cy},
                                 {"w", l.box.w},
                                 {"h", l.box.h}});
  return ordered_json{{"image", img.path}, {"boxes", boxes}};
}

}  // namespace

GenerateSummary generate(const SynthConfig& cfg, std::size_t n_images, const fs::path& dir) {
  cfg.validate();
  fs::create_directories(dir / "imgs");
  const Taxonomy taxonomy = Taxonomy::series_stage(cfg.n_series, cfg.n_stages);

  std::vector<LabeledImage> images(n_images);
  std::vector<std::size_t> warn(n_images, 0);
  const auto n = static_cast<long>(n_images);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(i);
    images[id] = synthesize_image(cfg, id, &warn[id]);
    images[id].path = image_name(id);
  }

  GenerateSummary summary;
  summary.n_images = n_images;
  json train = json::array(), test = json::array();
  std::ofstream labels(dir / "labels.jsonl", std::ios::binary);
  if (!labels) throw ValidationError("cannot write " + (dir / "labels.jsonl").string());
  for (std::size_t id = 0; id < n_images; ++id) {
    write_ppm(images[id].image, dir / images[id].path);
    labels << labels_line(images[id]).dump() << '\n';
    summary.n_labels += images[id].labels.size();
    summary.warnings += warn[id];
    if (is_test_id(id)) {
      test.push_back(id);
      ++summary.n_test;
    } else {
      train.push_back(id);
      ++summary.n_train;
    }
  }
  save_taxonomy(taxonomy, dir / "taxonomy.json");

  ordered_json manifest{{"n_images", n_images},
                        {"n_labels", summary.n_labels},
                        {"n_fine", taxonomy.n_fine()},
                        {"n_coarse", taxonomy.n_coarse()},
                        {"placement_warnings", summary.warnings},
                        {"config", json(cfg)},
                        {"split", ordered_json{{"train", train}, {"test", test}}}};
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
  return summary;
}

std::vector<LabeledImage> Dataset::subset(const std::vector<std::size_t>& ids) const {
  std::vector<LabeledImage> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(images.at(id));
  return out;
}

Dataset load(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory " + dir.string() + " not found");
  Dataset ds;
  ds.taxonomy = load_taxonomy(dir / "taxonomy.json");

  std::ifstream labels(dir / "labels.jsonl");
  if (!labels) throw ValidationError("missing " + (dir / "labels.jsonl").string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(labels, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "labels.jsonl:" + std::to_string(line_no);
    LabeledImage img;
    try {
      const json j = json::parse(line);
      img.path = j.at("image").get<std::string>();
      for (const auto& b : j.at("boxes"))
        img.labels.push_back({b.at("cls").get<std::size_t>(),
                              BBox{b.at("cx").get<double>(), b.at("cy").get<double>(),
                                   b.at("w").get<double>(), b.at("h").get<double>()}});
    } catch (const json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    validate_labels(img.labels, ds.taxonomy.n_fine(), where);
    img.image = read_ppm(dir / img.path);
    ds.images.push_back(std::move(img));
  }

  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    json m;
    try {
      in >> m;
      const auto count = m.at("n_images").get<std::size_t>();
      if (count != ds.images.size())
        throw ValidationError("manifest lists " + std::to_string(count) + " images but labels.jsonl has " +
                              std::to_string(ds.images.size()));
      ds.train = m.at("split").at("train").get<std::vector<std::size_t>>();
      ds.test = m.at("split").at("test").get<std::vector<std::size_t>>();
      if (m.contains("config")) ds.config = m.at("config").get<SynthConfig>();
    } catch (const json::exception& e) {
      throw ValidationError("manifest.json: " + std::string(e.what()));
    }
    for (std::size_t id : ds.train)
      if (id >= ds.images.size()) throw ValidationError("manifest split references missing image");
    for (std::size_t id : ds.test)
      if (id >= ds.images.size()) throw ValidationError("manifest split references missing image");
  } else {
    for (std::size_t id = 0; id < ds.images.size(); ++id)
      (is_test_id(id) ? ds.test : ds.train).push_back(id);
  }
  return ds;
}

}  // namespace hdet
