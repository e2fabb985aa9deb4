#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "hdet/error.hpp"
#include "hdet/model.hpp"

namespace hdet {

namespace {

constexpr char kMagic[5] = {'H', 'D', 'E', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

nlohmann::json grid_json(const GridSpec& g) {
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : g.anchors) anchors.push_back({a.w, a.h});
  return {{"s", g.s}, {"b", g.b}, {"n_fine", g.n_fine}, {"anchors", anchors}};
}

}  // namespace

void save_checkpoint(const Detector& det, const std::string& taxonomy_hash,
                     const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string data;
  for (const auto& p : det.params) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape.dims()}, {"offset", data.size()}});
    for (double v : p.data) put_u32(data, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  const nlohmann::json meta{{"tensors", tensors},
                            {"grid", grid_json(det.config.grid)},
                            {"image_size", det.config.image_size},
                            {"widths", det.config.widths},
                            {"taxonomy_hash", taxonomy_hash}};
  const std::string text = meta.dump();
  std::string blob(kMagic, sizeof kMagic);
  put_u32(blob, static_cast<std::uint32_t>(text.size()));
  blob += text;
  blob += data;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  const std::string blob{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string where = "checkpoint " + path.string();
  if (blob.size() < sizeof kMagic + 4 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0)
    throw ValidationError(where + ": bad magic");
  const std::size_t len = get_u32(blob, sizeof kMagic);
  const std::size_t data_start = sizeof kMagic + 4 + len;
  if (data_start > blob.size()) throw ValidationError(where + ": metadata length exceeds file size");

  Checkpoint ck;
  try {
    const auto meta = nlohmann::json::parse(blob.substr(sizeof kMagic + 4, len));
    DetectorConfig& cfg = ck.detector.config;
    cfg.image_size = meta.at("image_size").get<std::size_t>();
    cfg.widths = meta.at("widths").get<std::array<std::size_t, 4>>();
    const auto& g = meta.at("grid");
    cfg.grid.s = g.at("s").get<std::size_t>();
    cfg.grid.b = g.at("b").get<std::size_t>();
    cfg.grid.n_fine = g.at("n_fine").get<std::size_t>();
    for (const auto& a : g.at("anchors")) cfg.grid.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
    ck.taxonomy_hash = meta.at("taxonomy_hash").get<std::string>();
    for (const auto& t : meta.at("tensors")) {
      NamedTensor p{t.at("name").get<std::string>(), ad::Shape(t.at("shape").get<std::vector<std::size_t>>()), {}};
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t n = p.shape.numel();
      if (data_start + offset + 4 * n > blob.size()) throw ValidationError(where + ": truncated tensor data");
      p.data.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        p.data[i] = std::bit_cast<float>(get_u32(blob, data_start + offset + 4 * i));
      ck.detector.params.push_back(std::move(p));
    }
    cfg.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": corrupt metadata: " + e.what());
  }
  // shapes must match a freshly built detector
  const Detector ref = Detector::init(ck.detector.config, 0);
  if (ref.params.size() != ck.detector.params.size())
    throw ValidationError(where + ": wrong tensor count");
  for (std::size_t i = 0; i < ref.params.size(); ++i)
    if (ref.params[i].shape != ck.detector.params[i].shape || ref.params[i].name != ck.detector.params[i].name)
      throw ValidationError(where + ": tensor " + ck.detector.params[i].name + " has unexpected shape");
  return ck;
}

}  // namespace hdet
