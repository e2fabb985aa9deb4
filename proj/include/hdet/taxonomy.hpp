#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace hdet {

/// Two-level class hierarchy: every fine class belongs to one coarse class.
struct Taxonomy {
  std::vector<std::string> fine_names;
  std::vector<std::string> coarse_names;
  std::vector<std::size_t> fine_to_coarse;  // index = fine id

  std::size_t n_fine() const { return fine_names.size(); }
  std::size_t n_coarse() const { return coarse_names.size(); }

  /// Throws ValidationError for an id outside [0, n_fine).
  std::size_t to_coarse(std::size_t fine) const;

  /// Every violation found; empty means valid.
  std::vector<std::string> validate() const;
  /// Throws ValidationError listing the violations.
  void require_valid() const;

  /// FNV-1a over the canonical JSON form, as 16 hex digits.
  std::string hash() const;

  static Taxonomy identity(std::size_t n);
  /// series x stage grid: fine id = series * n_stages + stage; stages of a
  /// series merge pairwise ({0,1}, {2,3}, ...) into ceil(n_stages / 2)
  /// coarse classes per series.
  static Taxonomy series_stage(std::size_t n_series, std::size_t n_stages);

  friend bool operator==(const Taxonomy&, const Taxonomy&) = default;
};

void to_json(nlohmann::json& j, const Taxonomy& t);
void from_json(const nlohmann::json& j, Taxonomy& t);

Taxonomy load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const Taxonomy& t, const std::filesystem::path& path);

enum class LossVariant { normal, class_weighted, proposed };

const char* to_string(LossVariant v);
/// Accepts "normal", "weighted"/"class_weighted", "proposed".
LossVariant parse_loss_variant(const std::string& s);

/// Weights of the classification term.
///
/// `normal` ignores alpha/beta and behaves as alpha = 1, beta = 0;
/// `class_weighted` uses alpha with beta pinned to 0; `proposed` uses both.
struct HierLossParams {
  double alpha = 2.0;
  double beta = 1.0;
  LossVariant variant = LossVariant::proposed;

  static HierLossParams normal() { return {1.0, 0.0, LossVariant::normal}; }
  static HierLossParams class_weighted(double alpha) {
    return {alpha, 0.0, LossVariant::class_weighted};
  }
  static HierLossParams proposed(double alpha, double beta) {
    return {alpha, beta, LossVariant::proposed};
  }

  double effective_alpha() const { return variant == LossVariant::normal ? 1.0 : alpha; }
  double effective_beta() const { return variant == LossVariant::proposed ? beta : 0.0; }

  /// Throws ValidationError: alpha < 1, beta < 0, a normal variant carrying
  /// alpha != 1 or beta != 0, or a class-weighted variant with beta != 0.
  void validate() const;
};

/// Coarse-mismatch gate: effective beta when the two fine classes fall in
/// different coarse classes, 0 otherwise.
double gamma(const Taxonomy& t, const HierLossParams& params, std::size_t predicted_fine,
             std::size_t target_fine);

}  // namespace hdet
