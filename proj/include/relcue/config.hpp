#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcue/attributes.hpp"
#include "relcue/classifier.hpp"
#include "relcue/cues.hpp"
#include "relcue/error.hpp"
#include "relcue/mixer.hpp"
#include "relcue/prompts.hpp"
#include "relcue/room.hpp"

namespace relcue {

using json = nlohmann::json;

struct SplitCounts {
  std::size_t train = 1000;
  std::size_t validation = 100;
  std::size_t test = 100;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> s{"train", "validation", "test"};
  return s;
}

struct EmbeddingConfig {
  std::string provider = "oracle";  // oracle | file
  std::string audio_store;
  std::string text_store;
  double noise_sigma = 0.0;
  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  SplitCounts counts;
  MixerConfig mixer;
  bool write_audio = true;

  RoomSampling room;
  bool calibrate_absorption = true;
  std::string rir_cache;

  AttributeConfig attributes;

  ThresholdTable thresholds = ThresholdTable::defaults();
  std::map<Attribute, std::vector<std::string>> quantizers;

  PromptOptions prompts{default_verbs(), false, true};
  std::string templates;

  EmbeddingConfig embeddings;
  std::optional<double> leak_db;

  ClassifierConfig classifier;
  TrainingSchedule training;
  std::string head_init = "identity";  // identity | random

  PipelineConfig() {
    for (Attribute a : kQuantizedAttributes) quantizers[a] = default_independent_names(a);
  }

  void validate() const;
};

namespace detail {

// Tracks consumed keys so unknown ones are reported with their dotted path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void get(const std::string& key, Range& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ConfigError(where(key) + ": expected [lo, hi]");
    out = {v[0].get<double>(), v[1].get<double>()};
    if (!(out.lo <= out.hi)) throw ConfigError(where(key) + ": lo must not exceed hi");
  }

  void get_optional(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_null()) {
      out.reset();
      return;
    }
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number or null");
    out = v.get<double>();
  }

  Section child(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

}  // namespace detail

inline void PipelineConfig::validate() const {
  auto nondegenerate = [](const Range& r, const std::string& name) {
    if (!(r.lo < r.hi)) throw ConfigError(name + ": range must be non-degenerate");
  };
  nondegenerate(room.length_m, "room_sim.length_m");
  nondegenerate(room.width_m, "room_sim.width_m");
  nondegenerate(room.height_m, "room_sim.height_m");
  nondegenerate(room.rt60_s, "room_sim.rt60_s");
  nondegenerate(room.distance_m, "room_sim.distance_m");
  nondegenerate(room.source_height_m, "room_sim.source_height_m");
  nondegenerate(mixer.sir_db, "mixer.sir_db");
  if (room.rt60_s.lo <= 0.0) throw ConfigError("room_sim.rt60_s: must be positive");
  if (room.distance_m.lo <= 0.0) throw ConfigError("room_sim.distance_m: must be positive");
  if (room.max_order < 0) throw ConfigError("room_sim.max_order: must be non-negative");
  if (room.source_height_m.hi >= room.height_m.lo - room.wall_margin_m)
    throw ConfigError("room_sim.source_height_m: sources must fit below the ceiling");
  if (mixer.max_source_s <= 0.0) throw ConfigError("mixer.max_source_s: must be positive");
  if (!(mixer.peak > 0.0 && mixer.peak <= 1.0))
    throw ConfigError("mixer.peak: must lie in (0, 1]");
  if (jobs == 0) throw ConfigError("jobs: must be positive");
  thresholds.validate();
  for (const auto& [a, names] : quantizers) {
    if (!is_continuous(a))
      throw ConfigError("cue_engine.quantizers." + std::string(attribute_id(a)) +
                        ": not a continuous attribute");
    if (names.size() != 2 && names.size() != 3)
      throw ConfigError("cue_engine.quantizers." + std::string(attribute_id(a)) +
                        ": 2 or 3 category names required");
  }
  if (prompts.verbs.empty()) throw ConfigError("prompt_gen.verbs: must not be empty");
  if (embeddings.provider != "oracle" && embeddings.provider != "file")
    throw ConfigError("embeddings.provider: expected \"oracle\" or \"file\", got \"" +
                      embeddings.provider + "\"");
  if (embeddings.noise_sigma < 0.0)
    throw ConfigError("embeddings.noise_sigma: must be non-negative");
  if (leak_db && *leak_db <= 0.0) throw ConfigError("separation.leak_db: must be positive");
  if (head_init != "identity" && head_init != "random")
    throw ConfigError("training.init: expected \"identity\" or \"random\"");
  classifier.validate();
  training.validate();
}

inline PipelineConfig config_from_json(const json& root) {
  PipelineConfig c;
  detail::Section s(root, "");
  s.get("seed", c.seed);
  s.get("jobs", c.jobs);
  {
    auto m = s.child("mixer");
    auto counts = m.child("counts");
    counts.get("train", c.counts.train);
    counts.get("validation", c.counts.validation);
    counts.get("test", c.counts.test);
    counts.finish();
    m.get("sir_db", c.mixer.sir_db);
    m.get("short_source_s", c.mixer.overlap.short_source_s);
    m.get("long_span_s", c.mixer.overlap.long_span_s);
    m.get("max_source_s", c.mixer.max_source_s);
    m.get("peak", c.mixer.peak);
    m.get("write_audio", c.write_audio);
    m.finish();
  }
  {
    auto r = s.child("room_sim");
    r.get("length_m", c.room.length_m);
    r.get("width_m", c.room.width_m);
    r.get("height_m", c.room.height_m);
    r.get("rt60_s", c.room.rt60_s);
    r.get("distance_m", c.room.distance_m);
    r.get("source_height_m", c.room.source_height_m);
    r.get_optional("mic_height_m", c.room.mic_height_m);
    r.get("wall_margin_m", c.room.wall_margin_m);
    r.get("max_order", c.room.max_order);
    r.get("calibrate_absorption", c.calibrate_absorption);
    r.get("rir_cache", c.rir_cache);
    r.finish();
  }
  {
    auto a = s.child("attributes");
    auto y = a.child("yin");
    y.get("fmin_hz", c.attributes.yin.fmin_hz);
    y.get("fmax_hz", c.attributes.yin.fmax_hz);
    y.get("threshold", c.attributes.yin.threshold);
    y.get("frame_s", c.attributes.yin.frame_s);
    y.get("hop_s", c.attributes.yin.hop_s);
    y.finish();
    auto v = a.child("vad");
    v.get("frame_s", c.attributes.vad.frame_s);
    v.get("hop_s", c.attributes.vad.hop_s);
    v.get("abs_threshold_db", c.attributes.vad.abs_threshold_db);
    v.get("floor_margin_db", c.attributes.vad.floor_margin_db);
    v.get("min_dynamic_range_db", c.attributes.vad.min_dynamic_range_db);
    v.get("floor_percentile", c.attributes.vad.floor_percentile);
    v.get("hangover_s", c.attributes.vad.hangover_s);
    v.finish();
    a.get("max_pause_s", c.attributes.max_pause_s);
    if (a.has("vowels")) {
      auto vw = a.child("vowels");
      for (Language l : kLanguages) {
        if (l == Language::zh) continue;
        vw.get(std::string(language_code(l)), c.attributes.vowels.vowels[l]);
      }
      vw.finish();
    }
    a.finish();
  }
  {
    auto ce = s.child("cue_engine");
    if (ce.has("thresholds")) {
      auto th = ce.child("thresholds");
      std::map<Attribute, Threshold> entries = ThresholdTable::defaults().entries();
      for (Attribute a : kContinuousAttributes) {
        const std::string id(attribute_id(a));
        if (!th.has(id)) continue;
        auto e = th.child(id);
        std::string mode = entries[a].mode == DiffMode::direct ? "direct" : "percent";
        e.get("mode", mode);
        e.get("theta", entries[a].theta);
        e.finish();
        if (mode != "direct" && mode != "percent")
          throw ConfigError(e.where("mode") + ": expected \"direct\" or \"percent\"");
        entries[a].mode = mode == "direct" ? DiffMode::direct : DiffMode::percent;
      }
      th.finish();
      c.thresholds = ThresholdTable(entries);
    }
    if (ce.has("quantizers")) {
      const json& q = ce.raw("quantizers");
      if (!q.is_object()) throw ConfigError("cue_engine.quantizers: expected an object");
      c.quantizers.clear();
      for (const auto& [k, v] : q.items()) {
        Attribute a;
        try {
          a = parse_attribute(k);
        } catch (const Error&) {
          throw ConfigError("cue_engine.quantizers." + k + ": unknown attribute");
        }
        try {
          c.quantizers[a] = v.get<std::vector<std::string>>();
        } catch (const json::exception&) {
          throw ConfigError("cue_engine.quantizers." + k + ": expected a list of names");
        }
      }
    }
    ce.finish();
  }
  {
    auto p = s.child("prompt_gen");
    p.get("verbs", c.prompts.verbs);
    p.get("templates", c.templates);
    p.get("filter_similar", c.prompts.filter_similar);
    p.get("independent_prompts", c.prompts.independent_prompts);
    p.finish();
  }
  {
    auto e = s.child("embeddings");
    e.get("provider", c.embeddings.provider);
    e.get("audio_store", c.embeddings.audio_store);
    e.get("text_store", c.embeddings.text_store);
    e.get("noise_sigma", c.embeddings.noise_sigma);
    e.finish();
  }
  {
    auto sep = s.child("separation");
    sep.get_optional("leak_db", c.leak_db);
    sep.finish();
  }
  {
    auto cl = s.child("classifier");
    cl.get("temperature", c.classifier.temperature);
    cl.get("threshold", c.classifier.threshold);
    cl.finish();
  }
  {
    auto t = s.child("training");
    t.get("epochs", c.training.epochs);
    t.get("batch_size", c.training.batch_size);
    t.get("learning_rate", c.training.learning_rate);
    t.get("momentum", c.training.momentum);
    t.get("plateau_patience", c.training.plateau_patience);
    t.get("plateau_factor", c.training.plateau_factor);
    t.get("init", c.head_init);
    t.finish();
  }
  s.finish();
  c.validate();
  return c;
}

inline json config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["mixer"] = {{"counts",
                 {{"train", c.counts.train},
                  {"validation", c.counts.validation},
                  {"test", c.counts.test}}},
                {"sir_db", detail::range_json(c.mixer.sir_db)},
                {"short_source_s", c.mixer.overlap.short_source_s},
                {"long_span_s", c.mixer.overlap.long_span_s},
                {"max_source_s", c.mixer.max_source_s},
                {"peak", c.mixer.peak},
                {"write_audio", c.write_audio}};
  j["room_sim"] = {{"length_m", detail::range_json(c.room.length_m)},
                   {"width_m", detail::range_json(c.room.width_m)},
                   {"height_m", detail::range_json(c.room.height_m)},
                   {"rt60_s", detail::range_json(c.room.rt60_s)},
                   {"distance_m", detail::range_json(c.room.distance_m)},
                   {"source_height_m", detail::range_json(c.room.source_height_m)},
                   {"mic_height_m", c.room.mic_height_m ? json(*c.room.mic_height_m) : json()},
                   {"wall_margin_m", c.room.wall_margin_m},
                   {"max_order", c.room.max_order},
                   {"calibrate_absorption", c.calibrate_absorption},
                   {"rir_cache", c.rir_cache}};
  json vowels = json::object();
  for (const auto& [l, v] : c.attributes.vowels.vowels) vowels[std::string(language_code(l))] = v;
  const auto& y = c.attributes.yin;
  const auto& v = c.attributes.vad;
  j["attributes"] = {{"yin",
                      {{"fmin_hz", y.fmin_hz},
                       {"fmax_hz", y.fmax_hz},
                       {"threshold", y.threshold},
                       {"frame_s", y.frame_s},
                       {"hop_s", y.hop_s}}},
                     {"vad",
                      {{"frame_s", v.frame_s},
                       {"hop_s", v.hop_s},
                       {"abs_threshold_db", v.abs_threshold_db},
                       {"floor_margin_db", v.floor_margin_db},
                       {"min_dynamic_range_db", v.min_dynamic_range_db},
                       {"floor_percentile", v.floor_percentile},
                       {"hangover_s", v.hangover_s}}},
                     {"max_pause_s", c.attributes.max_pause_s},
                     {"vowels", vowels}};
  json th = json::object();
  for (const auto& [a, t] : c.thresholds.entries())
    th[std::string(attribute_id(a))] = {
        {"mode", t.mode == DiffMode::direct ? "direct" : "percent"}, {"theta", t.theta}};
  json q = json::object();
  for (const auto& [a, names] : c.quantizers) q[std::string(attribute_id(a))] = names;
  j["cue_engine"] = {{"thresholds", th}, {"quantizers", q}};
  j["prompt_gen"] = {{"verbs", c.prompts.verbs},
                     {"templates", c.templates},
                     {"filter_similar", c.prompts.filter_similar},
                     {"independent_prompts", c.prompts.independent_prompts}};
  j["embeddings"] = {{"provider", c.embeddings.provider},
                     {"audio_store", c.embeddings.audio_store},
                     {"text_store", c.embeddings.text_store},
                     {"noise_sigma", c.embeddings.noise_sigma}};
  j["separation"] = {{"leak_db", c.leak_db ? json(*c.leak_db) : json()}};
  j["classifier"] = {{"temperature", c.classifier.temperature},
                     {"threshold", c.classifier.threshold}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"learning_rate", c.training.learning_rate},
                   {"momentum", c.training.momentum},
                   {"plateau_patience", c.training.plateau_patience},
                   {"plateau_factor", c.training.plateau_factor},
                   {"init", c.head_init}};
  return j;
}

inline bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

// JSON with // and /* */ comments allowed.
inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::string config_hash(const PipelineConfig& c) {
  const std::uint64_t h = fnv1a(config_to_json(c).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace relcue
