#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relcue/attributes.hpp"
#include "relcue/error.hpp"

namespace relcue {

enum class DiffMode { direct, percent };
enum class CueKind { relative, independent };
enum class CueSource { target, pair };

inline constexpr const char* kSimilar = "similar";
inline constexpr const char* kSame = "Same";

inline std::string_view cue_kind_name(CueKind k) {
  return k == CueKind::relative ? "relative" : "independent";
}

inline CueKind parse_cue_kind(std::string_view s) {
  if (s == "relative") return CueKind::relative;
  if (s == "independent") return CueKind::independent;
  throw Error("unknown cue kind '" + std::string(s) + "'");
}

struct Threshold {
  DiffMode mode = DiffMode::direct;
  double theta = 0.0;
  friend bool operator==(const Threshold&, const Threshold&) = default;
};

// One entry per continuous attribute.
class ThresholdTable {
 public:
  ThresholdTable() = default;
  explicit ThresholdTable(std::map<Attribute, Threshold> entries)
      : entries_(std::move(entries)) {
    validate();
  }

  // Perceptual thresholds for relative cues.
  static ThresholdTable defaults() {
    return ThresholdTable({
        {Attribute::rms_energy, {DiffMode::direct, 3.0}},
        {Attribute::distance, {DiffMode::direct, 0.5}},
        {Attribute::age, {DiffMode::direct, 10.0}},
        {Attribute::mean_f0, {DiffMode::percent, 6.0}},
        {Attribute::f0_span, {DiffMode::percent, 25.0}},
        {Attribute::speaking_rate, {DiffMode::percent, 15.0}},
        {Attribute::speaking_duration, {DiffMode::percent, 15.0}},
        {Attribute::appearance_time, {DiffMode::direct, 0.1}},
    });
  }

  const Threshold& at(Attribute a) const {
    const auto it = entries_.find(a);
    if (it == entries_.end())
      throw Error("no threshold for attribute " + std::string(attribute_id(a)));
    return it->second;
  }

  const std::map<Attribute, Threshold>& entries() const { return entries_; }

  void validate() const {
    for (Attribute a : kContinuousAttributes) {
      const auto it = entries_.find(a);
      if (it == entries_.end())
        throw ConfigError("cue_engine.thresholds." + std::string(attribute_id(a)) +
                          ": missing");
      if (!(it->second.theta > 0.0))
        throw ConfigError("cue_engine.thresholds." + std::string(attribute_id(a)) +
                          ": theta must be positive");
    }
    for (const auto& [a, t] : entries_)
      if (!is_continuous(a))
        throw ConfigError("cue_engine.thresholds." + std::string(attribute_id(a)) +
                          ": not a continuous attribute");
  }

  friend bool operator==(const ThresholdTable&, const ThresholdTable&) = default;

 private:
  std::map<Attribute, Threshold> entries_;
};

struct CueLabel {
  Attribute attribute = Attribute::mean_f0;
  CueKind kind = CueKind::relative;
  std::string category;
  std::optional<double> delta;
  CueSource source = CueSource::pair;

  // "similar" and "Same" carry no discriminative information.
  bool discriminative() const {
    return !(kind == CueKind::relative && (category == kSimilar || category == kSame));
  }

  friend bool operator==(const CueLabel&, const CueLabel&) = default;
};

struct RelativeNames {
  const char* above;  // delta > theta
  const char* below;  // delta < -theta
};

inline RelativeNames relative_names(Attribute a) {
  switch (a) {
    case Attribute::rms_energy: return {"louder", "quieter"};
    case Attribute::distance: return {"farther", "nearer"};
    case Attribute::age: return {"older", "younger"};
    case Attribute::mean_f0: return {"higher", "lower"};
    case Attribute::f0_span: return {"wider", "narrower"};
    case Attribute::speaking_rate: return {"faster", "slower"};
    case Attribute::speaking_duration: return {"longer", "shorter"};
    case Attribute::appearance_time: return {"later", "earlier"};
    default:
      throw Error("relative_names: " + std::string(attribute_id(a)) +
                  " is not continuous");
  }
}

inline double direct_diff(double x_tar, double x_inf) { return x_tar - x_inf; }

// Percentage difference relative to the smaller value. Antisymmetric.
inline double percent_diff(double x_tar, double x_inf) {
  require(x_tar > 0.0 && x_inf > 0.0, "percent_diff: inputs must be positive");
  return (x_tar - x_inf) * 100.0 / std::min(x_tar, x_inf);
}

inline bool valid_for_mode(DiffMode m, double x) {
  return std::isfinite(x) && (m == DiffMode::direct || x > 0.0);
}

inline double attribute_delta(const Threshold& t, double x_tar, double x_inf) {
  return t.mode == DiffMode::direct ? direct_diff(x_tar, x_inf)
                                    : percent_diff(x_tar, x_inf);
}

inline CueLabel relative_category(Attribute a, double x_tar, double x_inf,
                                  const ThresholdTable& thresholds) {
  const Threshold& t = thresholds.at(a);
  const double d = attribute_delta(t, x_tar, x_inf);
  const RelativeNames names = relative_names(a);
  CueLabel l{a, CueKind::relative, kSimilar, d, CueSource::pair};
  if (d > t.theta)
    l.category = names.above;
  else if (d < -t.theta)
    l.category = names.below;
  return l;
}

inline CueLabel discrete_relative(Attribute a, const std::string& d_tar,
                                  const std::string& d_inf) {
  require(!d_tar.empty() && !d_inf.empty(), "discrete_relative: empty category");
  return {a, CueKind::relative, d_tar == d_inf ? std::string(kSame) : d_tar,
          std::nullopt, CueSource::pair};
}

// Equal-frequency quantizer over a continuous attribute.
struct IndependentQuantizer {
  Attribute attribute = Attribute::mean_f0;
  std::vector<double> breakpoints;
  std::vector<std::string> names;

  std::size_t bins() const { return names.size(); }

  // Bin index; a value exactly on a breakpoint goes to the upper bin.
  std::size_t bin(double x) const {
    return static_cast<std::size_t>(
        std::upper_bound(breakpoints.begin(), breakpoints.end(), x) -
        breakpoints.begin());
  }

  void validate() const {
    require(names.size() == breakpoints.size() + 1,
            "quantizer " + std::string(attribute_id(attribute)) +
                ": need one more name than breakpoints");
    require(names.size() == 2 || names.size() == 3,
            "quantizer " + std::string(attribute_id(attribute)) +
                ": 2 or 3 categories supported");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      require(breakpoints[i] > breakpoints[i - 1],
              "quantizer " + std::string(attribute_id(attribute)) +
                  ": breakpoints must be strictly increasing");
  }

  friend bool operator==(const IndependentQuantizer&, const IndependentQuantizer&) = default;
};

// Category names for independent cues of the six quantized attributes.
inline std::vector<std::string> default_independent_names(Attribute a) {
  switch (a) {
    case Attribute::mean_f0: return {"low", "normal", "high"};
    case Attribute::f0_span: return {"narrow", "normal", "wide"};
    case Attribute::rms_energy: return {"quiet", "normal", "loud"};
    case Attribute::distance: return {"near", "far"};
    case Attribute::speaking_rate: return {"slow", "normal", "fast"};
    case Attribute::speaking_duration: return {"short", "long"};
    default: return {};
  }
}

inline constexpr std::array<Attribute, 6> kQuantizedAttributes = {
    Attribute::mean_f0,    Attribute::f0_span,       Attribute::rms_energy,
    Attribute::distance,   Attribute::speaking_rate, Attribute::speaking_duration};

inline IndependentQuantizer fit_independent_quantizer(Attribute a,
                                                      std::vector<double> values,
                                                      std::size_t k,
                                                      std::vector<std::string> names) {
  require(k == 2 || k == 3, "fit_independent_quantizer: k must be 2 or 3");
  require(names.size() == k, "fit_independent_quantizer: need k category names");
  std::sort(values.begin(), values.end());
  std::vector<double> uniq(values);
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  require(uniq.size() >= k, "fit_independent_quantizer: " + std::string(attribute_id(a)) +
                                ": fewer distinct values than bins");

  const std::size_t n = values.size();
  IndependentQuantizer q{a, {}, std::move(names)};
  for (std::size_t j = 1; j < k; ++j) {
    // Lower bins hold round(j*n/k) values in total.
    auto m = static_cast<std::size_t>(
        std::llround(static_cast<double>(j * n) / static_cast<double>(k)));
    m = std::clamp<std::size_t>(m, 1, n - 1);
    q.breakpoints.push_back(0.5 * (values[m - 1] + values[m]));
  }
  q.validate();
  return q;
}

inline CueLabel independent_quantize(const IndependentQuantizer& q, double x) {
  return {q.attribute, CueKind::independent, q.names.at(q.bin(x)), std::nullopt,
          CueSource::target};
}

using QuantizerSet = std::map<Attribute, IndependentQuantizer>;

// All relative labels available in both vectors, then all independent labels
// for target attributes that have a fitted quantizer.
inline std::vector<CueLabel> cue_labels_for_pair(const AttributeVector& tar,
                                                 const AttributeVector& inf,
                                                 const ThresholdTable& thresholds,
                                                 const QuantizerSet& quantizers = {}) {
  std::vector<CueLabel> out;
  for (Attribute a : kAllAttributes) {
    if (is_continuous(a)) {
      const auto xt = tar.continuous(a);
      const auto xi = inf.continuous(a);
      if (!xt || !xi) continue;
      const DiffMode mode = thresholds.at(a).mode;
      if (!valid_for_mode(mode, *xt) || !valid_for_mode(mode, *xi)) continue;
      out.push_back(relative_category(a, *xt, *xi, thresholds));
    } else {
      const auto dt = tar.discrete(a);
      const auto di = inf.discrete(a);
      if (!dt || !di || dt->empty() || di->empty()) continue;
      out.push_back(discrete_relative(a, *dt, *di));
    }
  }
  for (const auto& [a, q] : quantizers) {
    const auto xt = tar.continuous(a);
    if (!xt) continue;
    out.push_back(independent_quantize(q, *xt));
  }
  return out;
}

}  // namespace relcue
