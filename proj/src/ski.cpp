#include "inflect/ski.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "inflect/errors.hpp"

namespace inflect {

std::vector<double> normalize_profile(std::span<const double> values) {
  if (values.empty()) throw DegenerateInput("normalize: empty profile");
  const double top = *std::max_element(values.begin(), values.end());
  if (!(top > 0.0)) throw DegenerateInput("normalize: profile maximum is not positive");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(1.0 - v / top);
  return out;
}

std::vector<double> ski_scores(std::span<const double> h_tilde, std::span<const double> g_tilde, double alpha_mix) {
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) throw InvalidInput("ski_scores: alpha must lie in [0, 1]");
  if (h_tilde.size() != g_tilde.size()) throw InvalidInput("ski_scores: profile lengths differ");
  std::vector<double> out;
  out.reserve(h_tilde.size());
  for (std::size_t l = 0; l < h_tilde.size(); ++l) {
    // exact reductions at the endpoints
    if (alpha_mix == 1.0) {
      out.push_back(h_tilde[l]);
    } else if (alpha_mix == 0.0) {
      out.push_back(g_tilde[l]);
    } else {
      out.push_back(alpha_mix * h_tilde[l] + (1.0 - alpha_mix) * g_tilde[l]);
    }
  }
  return out;
}

std::vector<int> local_maxima(std::span<const double> scores) {
  std::vector<int> out;
  const int n = static_cast<int>(scores.size());
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && scores[j + 1] == scores[i]) ++j;
    const bool left_lower = i == 0 || scores[i - 1] < scores[i];
    const bool right_lower = j == n - 1 || scores[j + 1] < scores[i];
    if (left_lower && right_lower) out.push_back(i);
    i = j + 1;
  }
  return out;
}

std::vector<int> expand_band(std::span<const int> centers, int s, int num_layers) {
  if (s < 0) throw InvalidInput("expand_band: s must be >= 0");
  std::set<int> band;
  for (int c : centers) {
    for (int l = std::max(0, c - s); l <= std::min(num_layers - 1, c + s); ++l) band.insert(l);
  }
  return {band.begin(), band.end()};
}

SkiResult locate_band_maxima(std::span<const double> ski, int s) {
  if (ski.empty()) throw InvalidInput("locate_band_maxima: empty SKI vector");
  if (s < 0) throw InvalidInput("locate_band_maxima: s must be >= 0");
  SkiResult r;
  r.method = "ski-maxima";
  r.ski.assign(ski.begin(), ski.end());
  r.s = s;
  r.candidates = local_maxima(ski);
  r.band = expand_band(r.candidates, s, static_cast<int>(ski.size()));
  return r;
}

SkiResult locate_band_maxima(std::span<const double> entropy, std::span<const double> activation_grad,
                             double alpha_mix, int s) {
  if (entropy.size() != activation_grad.size()) throw InvalidInput("locate_band_maxima: profile lengths differ");
  const auto h = normalize_profile(entropy);
  const auto g = normalize_profile(activation_grad);
  SkiResult r = locate_band_maxima(ski_scores(h, g, alpha_mix), s);
  r.entropy.assign(entropy.begin(), entropy.end());
  r.activation_grad.assign(activation_grad.begin(), activation_grad.end());
  r.h_tilde = h;
  r.g_tilde = g;
  r.alpha_mix = alpha_mix;
  return r;
}

SkiResult locate_band_greedy(std::span<const double> entropy, std::span<const double> activation_grad, double threshold,
                             int s, double alpha_mix) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("locate_band_greedy: threshold must lie in (0, 1)");
  if (entropy.empty() || entropy.size() != activation_grad.size()) {
    throw InvalidInput("locate_band_greedy: profiles must be non-empty and equally long");
  }
  if (s < 0) throw InvalidInput("locate_band_greedy: s must be >= 0");
  const int L = static_cast<int>(entropy.size());
  SkiResult r;
  r.method = "greedy";
  r.entropy.assign(entropy.begin(), entropy.end());
  r.activation_grad.assign(activation_grad.begin(), activation_grad.end());
  r.h_tilde = normalize_profile(entropy);
  r.g_tilde = normalize_profile(activation_grad);
  r.ski = ski_scores(r.h_tilde, r.g_tilde, alpha_mix);
  r.alpha_mix = alpha_mix;
  r.threshold = threshold;
  r.s = s;

  r.entropy_min_layer = static_cast<int>(std::min_element(entropy.begin(), entropy.end()) - entropy.begin());
  const double top = *std::max_element(activation_grad.begin(), activation_grad.end());
  for (int l = 0; l < L; ++l) {
    if (activation_grad[static_cast<std::size_t>(l)] / top < threshold) {
      r.grad_threshold_layer = l;
      break;
    }
  }
  r.candidates.push_back(r.entropy_min_layer);
  if (r.grad_threshold_layer) {
    if (*r.grad_threshold_layer != r.entropy_min_layer) r.candidates.push_back(*r.grad_threshold_layer);
    std::sort(r.candidates.begin(), r.candidates.end());
  } else {
    r.flags.push_back("grad-threshold-not-reached");
  }
  r.band = expand_band(r.candidates, s, L);
  return r;
}

std::string band_string(std::span<const int> band) {
  std::string s = "{";
  for (std::size_t i = 0; i < band.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(band[i]);
  }
  return s + "}";
}

std::string locator_report(const SkiResult& r) {
  nlohmann::ordered_json j;
  j["record"] = "inflect-locator";
  j["method"] = r.method;
  j["H"] = r.entropy;
  j["G"] = r.activation_grad;
  j["H_tilde"] = r.h_tilde;
  j["G_tilde"] = r.g_tilde;
  j["ski"] = r.ski;
  j["alpha_mix"] = r.alpha_mix;
  j["candidates"] = r.candidates;
  j["band"] = r.band;
  j["s"] = r.s;
  if (r.method == "greedy") {
    j["threshold"] = r.threshold;
    j["entropy_min_layer"] = r.entropy_min_layer;
    j["grad_threshold_layer"] = r.grad_threshold_layer ? nlohmann::ordered_json(*r.grad_threshold_layer) : nlohmann::ordered_json(nullptr);
  }
  j["flags"] = r.flags;
  return j.dump(2);
}

SkiResult parse_locator_report(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SkiResult r;
    r.method = j.at("method").get<std::string>();
    r.entropy = j.at("H").get<std::vector<double>>();
    r.activation_grad = j.at("G").get<std::vector<double>>();
    r.h_tilde = j.at("H_tilde").get<std::vector<double>>();
    r.g_tilde = j.at("G_tilde").get<std::vector<double>>();
    r.ski = j.at("ski").get<std::vector<double>>();
    r.alpha_mix = j.at("alpha_mix").get<double>();
    r.candidates = j.at("candidates").get<std::vector<int>>();
    r.band = j.at("band").get<std::vector<int>>();
    r.s = j.at("s").get<int>();
    r.flags = j.at("flags").get<std::vector<std::string>>();
    if (r.method == "greedy") {
      r.threshold = j.at("threshold").get<double>();
      r.entropy_min_layer = j.at("entropy_min_layer").get<int>();
      if (!j.at("grad_threshold_layer").is_null()) r.grad_threshold_layer = j.at("grad_threshold_layer").get<int>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("locator report: ") + e.what());
  }
}

}  // namespace inflect
