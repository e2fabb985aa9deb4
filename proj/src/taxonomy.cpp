#include "hdet/taxonomy.hpp"

#include <cstdio>
#include <fstream>

#include "hdet/error.hpp"

namespace hdet {

std::size_t Taxonomy::to_coarse(std::size_t fine) const {
  if (fine >= fine_to_coarse.size())
    throw ValidationError("fine class " + std::to_string(fine) + " out of range (n_fine=" +
                          std::to_string(n_fine()) + ")");
  return fine_to_coarse[fine];
}

std::vector<std::string> Taxonomy::validate() const {
  std::vector<std::string> out;
  if (fine_names.empty()) out.emplace_back("no fine classes");
  if (n_coarse() > n_fine()) out.emplace_back("more coarse classes than fine classes");
  for (std::size_t f = fine_to_coarse.size(); f < n_fine(); ++f)
    out.push_back("fine " + std::to_string(f) + " unmapped");
  if (fine_to_coarse.size() > n_fine())
    out.push_back("fine_to_coarse has " + std::to_string(fine_to_coarse.size()) +
                  " entries but there are " + std::to_string(n_fine()) + " fine names");
  std::vector<bool> used(n_coarse(), false);
  for (std::size_t f = 0; f < fine_to_coarse.size(); ++f) {
    const std::size_t c = fine_to_coarse[f];
    if (c >= n_coarse())
      out.push_back("fine " + std::to_string(f) + " maps to unknown coarse " + std::to_string(c));
    else
      used[c] = true;
  }
  for (std::size_t c = 0; c < used.size(); ++c)
    if (!used[c]) out.push_back("coarse " + std::to_string(c) + " unused");
  return out;
}

void Taxonomy::require_valid() const {
  const auto problems = validate();
  if (problems.empty()) return;
  std::string msg = "invalid taxonomy:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw ValidationError(msg);
}

std::string Taxonomy::hash() const {
  const std::string text = nlohmann::json(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Taxonomy Taxonomy::identity(std::size_t n) {
  Taxonomy t;
  for (std::size_t i = 0; i < n; ++i) {
    t.fine_names.push_back("class" + std::to_string(i));
    t.coarse_names.push_back("class" + std::to_string(i));
    t.fine_to_coarse.push_back(i);
  }
  return t;
}

Taxonomy Taxonomy::series_stage(std::size_t n_series, std::size_t n_stages) {
  if (n_series == 0 || n_stages == 0) throw ValidationError("series_stage: empty grid");
  Taxonomy t;
  const std::size_t groups = (n_stages + 1) / 2;
  for (std::size_t s = 0; s < n_series; ++s) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t first = 2 * g, last = std::min(2 * g + 1, n_stages - 1);
      std::string name = "series" + std::to_string(s) + "_stage" + std::to_string(first);
      if (last != first) name += "-" + std::to_string(last);
      t.coarse_names.push_back(std::move(name));
    }
    for (std::size_t st = 0; st < n_stages; ++st) {
      t.fine_names.push_back("series" + std::to_string(s) + "_stage" + std::to_string(st));
      t.fine_to_coarse.push_back(s * groups + st / 2);
    }
  }
  return t;
}

void to_json(nlohmann::json& j, const Taxonomy& t) {
  j = nlohmann::json{{"fine_names", t.fine_names},
                     {"coarse_names", t.coarse_names},
                     {"fine_to_coarse", t.fine_to_coarse}};
}

void from_json(const nlohmann::json& j, Taxonomy& t) {
  try {
    j.at("fine_names").get_to(t.fine_names);
    j.at("coarse_names").get_to(t.coarse_names);
    j.at("fine_to_coarse").get_to(t.fine_to_coarse);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("taxonomy: ") + e.what());
  }
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open taxonomy file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("taxonomy file " + path.string() + ": " + e.what());
  }
  Taxonomy t = j.get<Taxonomy>();
  t.require_valid();
  return t;
}

void save_taxonomy(const Taxonomy& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << nlohmann::json(t).dump(2) << '\n';
}

const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::normal: return "normal";
    case LossVariant::class_weighted: return "class_weighted";
    case LossVariant::proposed: return "proposed";
  }
  return "?";
}

LossVariant parse_loss_variant(const std::string& s) {
  if (s == "normal") return LossVariant::normal;
  if (s == "weighted" || s == "class_weighted") return LossVariant::class_weighted;
  if (s == "proposed") return LossVariant::proposed;
  throw ValidationError("unknown loss variant '" + s + "'");
}

void HierLossParams::validate() const {
  if (!(alpha >= 1.0)) throw ValidationError("loss.alpha must be >= 1, got " + std::to_string(alpha));
  if (!(beta >= 0.0)) throw ValidationError("loss.beta must be >= 0, got " + std::to_string(beta));
  if (variant == LossVariant::normal && (alpha != 1.0 || beta != 0.0))
    throw ValidationError("loss variant normal takes no alpha/beta");
  if (variant == LossVariant::class_weighted && beta != 0.0)
    throw ValidationError("loss variant class_weighted requires beta = 0");
}

double gamma(const Taxonomy& t, const HierLossParams& params, std::size_t predicted_fine,
             std::size_t target_fine) {
  const std::size_t pc = t.to_coarse(predicted_fine);
  const std::size_t tc = t.to_coarse(target_fine);
  return pc != tc ? params.effective_beta() : 0.0;
}

}  // namespace hdet
