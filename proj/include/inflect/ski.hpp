#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace inflect {

inline constexpr double kDefaultAlphaMix = 0.5;
inline constexpr double kDefaultGradThreshold = 0.25;
inline constexpr int kDefaultExpansion = 1;

/// Outcome of inflection-layer localisation.
struct SkiResult {
  std::string method;               // "ski-maxima" or "greedy"
  std::vector<double> entropy;      // raw per-layer profiles (may be empty for ski-only input)
  std::vector<double> activation_grad;
  std::vector<double> h_tilde;
  std::vector<double> g_tilde;
  std::vector<double> ski;
  double alpha_mix = kDefaultAlphaMix;
  std::vector<int> candidates;
  std::vector<int> band;            // sorted, deduplicated, within [0, L)
  int s = kDefaultExpansion;
  // greedy only
  double threshold = kDefaultGradThreshold;
  int entropy_min_layer = -1;
  std::optional<int> grad_threshold_layer;
  std::vector<std::string> flags;
};

/// 1 - v / max(v). DegenerateInput when the profile is empty or max(v) <= 0.
std::vector<double> normalize_profile(std::span<const double> values);

/// Per-layer α·H̃ + (1-α)·G̃. InvalidInput if α is outside [0, 1] or sizes differ.
std::vector<double> ski_scores(std::span<const double> h_tilde, std::span<const double> g_tilde, double alpha_mix);

/// Local maxima; a plateau of equal values above both neighbours contributes
/// its lowest index. Array ends count as lower neighbours.
std::vector<int> local_maxima(std::span<const double> scores);

/// Union of [c - s, c + s] ∩ [0, num_layers) over centers, sorted.
std::vector<int> expand_band(std::span<const int> centers, int s, int num_layers);

/// Band from local maxima of an SKI vector.
SkiResult locate_band_maxima(std::span<const double> ski, int s = kDefaultExpansion);
/// Full pipeline: normalise, combine, take maxima, expand.
SkiResult locate_band_maxima(std::span<const double> entropy, std::span<const double> activation_grad,
                             double alpha_mix = kDefaultAlphaMix, int s = kDefaultExpansion);

/// Entropy argmin plus the first layer whose gradient / max gradient drops
/// below `threshold`, each expanded by ±s. When no layer is below threshold
/// the band comes from the entropy minimum alone and the
/// "grad-threshold-not-reached" flag is set. H̃, G̃ and SKI at `alpha_mix` are
/// filled in for reporting.
SkiResult locate_band_greedy(std::span<const double> entropy, std::span<const double> activation_grad,
                             double threshold = kDefaultGradThreshold, int s = kDefaultExpansion,
                             double alpha_mix = kDefaultAlphaMix);

/// Structured-text (JSON) locator record.
std::string locator_report(const SkiResult& result);
SkiResult parse_locator_report(const std::string& text);

std::string band_string(std::span<const int> band);  // "{0,1,4,5,6}"

}  // namespace inflect
