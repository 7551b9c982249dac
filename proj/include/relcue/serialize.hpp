#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcue/analysis.hpp"
#include "relcue/attributes.hpp"
#include "relcue/cues.hpp"
#include "relcue/error.hpp"
#include "relcue/mixer.hpp"
#include "relcue/prompts.hpp"
#include "relcue/room.hpp"

namespace relcue {

using json = nlohmann::json;

namespace detail {

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json();
}

template <typename T>
std::optional<T> opt_get(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

inline json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline Vec3 vec3_get(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Manifest lines.

inline json utterance_json(const UtteranceMeta& m, const std::string& path,
                           const std::string& split) {
  json j;
  j["id"] = m.utterance_id;
  j["path"] = path;
  j["speaker"] = m.speaker_id;
  j["language"] = std::string(language_code(m.language));
  j["gender"] = std::string(gender_name(m.gender));
  j["age"] = detail::opt_json(m.age_years);
  j["emotion"] = detail::opt_json(m.emotion);
  j["transcription"] = detail::opt_json(m.transcription);
  if (m.word_boundaries) {
    json w = json::array();
    for (const auto& wb : *m.word_boundaries) w.push_back(json::array({wb.word, wb.start_s, wb.end_s}));
    j["words"] = w;
  } else {
    j["words"] = nullptr;
  }
  j["split"] = split;
  return j;
}

struct ManifestEntry {
  UtteranceMeta meta;
  std::string path;
  std::string split;
};

inline ManifestEntry utterance_from_json(const json& j, const std::string& where) {
  auto field = [&](const char* k) -> const json& {
    if (!j.contains(k)) throw Error(where + ": missing field '" + k + "'");
    return j.at(k);
  };
  ManifestEntry e;
  try {
    e.meta.utterance_id = field("id").get<std::string>();
    e.path = field("path").get<std::string>();
    e.meta.speaker_id = field("speaker").get<std::string>();
    e.meta.language = parse_language(field("language").get<std::string>());
    e.meta.gender = parse_gender(field("gender").get<std::string>());
    e.meta.age_years = detail::opt_get<double>(j, "age");
    e.meta.emotion = detail::opt_get<std::string>(j, "emotion");
    e.meta.transcription = detail::opt_get<std::string>(j, "transcription");
    if (j.contains("words") && !j.at("words").is_null()) {
      std::vector<WordBoundary> words;
      for (const auto& w : j.at("words")) {
        if (!w.is_array() || w.size() != 3)
          throw Error(where + ": words entries must be [word, start, end]");
        words.push_back({w[0].get<std::string>(), w[1].get<double>(), w[2].get<double>()});
      }
      e.meta.word_boundaries = std::move(words);
    }
    e.split = j.contains("split") ? j.at("split").get<std::string>() : std::string();
  } catch (const json::exception& ex) {
    throw Error(where + ": " + ex.what());
  }
  try {
    e.meta.validate();
  } catch (const Error& ex) {
    throw Error(where + ": " + ex.what());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Attributes, cues, prompts.

inline json attributes_json(const AttributeVector& a) {
  return {{"mean_f0", detail::opt_json(a.mean_f0_hz)},
          {"f0_span", detail::opt_json(a.f0_span_hz)},
          {"age", detail::opt_json(a.age_years)},
          {"speaking_duration", a.speaking_duration_s},
          {"speaking_rate", detail::opt_json(a.speaking_rate_spm)},
          {"rms_energy", a.rms_energy_db},
          {"distance", a.distance_m},
          {"appearance_time", a.appearance_time_s},
          {"language", std::string(language_code(a.language))},
          {"gender", std::string(gender_name(a.gender))},
          {"emotion", detail::opt_json(a.emotion)},
          {"transcription", detail::opt_json(a.transcription)}};
}

inline AttributeVector attributes_from_json(const json& j) {
  AttributeVector a;
  a.mean_f0_hz = detail::opt_get<double>(j, "mean_f0");
  a.f0_span_hz = detail::opt_get<double>(j, "f0_span");
  a.age_years = detail::opt_get<double>(j, "age");
  a.speaking_duration_s = j.at("speaking_duration").get<double>();
  a.speaking_rate_spm = detail::opt_get<double>(j, "speaking_rate");
  a.rms_energy_db = j.at("rms_energy").get<double>();
  a.distance_m = j.at("distance").get<double>();
  a.appearance_time_s = j.at("appearance_time").get<double>();
  a.language = parse_language(j.at("language").get<std::string>());
  a.gender = parse_gender(j.at("gender").get<std::string>());
  a.emotion = detail::opt_get<std::string>(j, "emotion");
  a.transcription = detail::opt_get<std::string>(j, "transcription");
  return a;
}

inline json cue_json(const CueLabel& l) {
  return {{"attribute", std::string(attribute_id(l.attribute))},
          {"kind", std::string(cue_kind_name(l.kind))},
          {"category", l.category},
          {"delta", detail::opt_json(l.delta)},
          {"source", l.source == CueSource::target ? "target" : "pair"}};
}

inline CueLabel cue_from_json(const json& j) {
  CueLabel l;
  l.attribute = parse_attribute(j.at("attribute").get<std::string>());
  l.kind = parse_cue_kind(j.at("kind").get<std::string>());
  l.category = j.at("category").get<std::string>();
  l.delta = detail::opt_get<double>(j, "delta");
  l.source = j.at("source").get<std::string>() == "target" ? CueSource::target : CueSource::pair;
  return l;
}

inline json prompt_json(const PromptRecord& p) {
  json cues = json::array();
  json types = json::array();
  for (const auto& c : p.cues) {
    cues.push_back(cue_json(c));
    types.push_back(std::string(attribute_id(c.attribute)));
  }
  return {{"text", p.text},
          {"config", std::string(prompt_config_name(p.config))},
          {"cue_types", types},
          {"cues", cues},
          {"target_index", p.target_index}};
}

inline PromptRecord prompt_from_json(const json& j) {
  PromptRecord p;
  p.text = j.at("text").get<std::string>();
  p.config = parse_prompt_config(j.at("config").get<std::string>());
  for (const auto& c : j.at("cues")) p.cues.push_back(cue_from_json(c));
  p.target_index = j.at("target_index").get<int>();
  require(!p.cues.empty(), "prompt record without cues");
  return p;
}

inline json quantizers_json(const QuantizerSet& qs) {
  json j = json::object();
  for (const auto& [a, q] : qs)
    j[std::string(attribute_id(a))] = {{"breakpoints", q.breakpoints}, {"names", q.names}};
  return j;
}

inline QuantizerSet quantizers_from_json(const json& j) {
  QuantizerSet qs;
  for (const auto& [k, v] : j.items()) {
    IndependentQuantizer q;
    q.attribute = parse_attribute(k);
    q.breakpoints = v.at("breakpoints").get<std::vector<double>>();
    q.names = v.at("names").get<std::vector<std::string>>();
    q.validate();
    qs[q.attribute] = q;
  }
  return qs;
}

// ---------------------------------------------------------------------------
// Mixture metadata.

inline std::string audio_path(const std::string& id, const char* what) {
  return "audio/" + id + "_" + what + ".wav";
}

inline json placement_json(const SourcePlacement& p) {
  return {{"horizontal_distance_m", p.horizontal_distance_m},
          {"azimuth_rad", p.azimuth_rad},
          {"source_height_m", p.source_height_m},
          {"position", detail::vec3_json(p.position)}};
}

inline SourcePlacement placement_from_json(const json& j) {
  return {j.at("horizontal_distance_m").get<double>(), j.at("azimuth_rad").get<double>(),
          j.at("source_height_m").get<double>(), detail::vec3_get(j.at("position"))};
}

inline json record_json(const MixtureRecord& r, bool with_audio_paths) {
  const MixturePlan& p = r.plan;
  json j;
  j["id"] = p.id;
  j["split"] = p.split;
  j["seed"] = p.seed;
  j["s1_id"] = p.s1_id;
  j["s2_id"] = p.s2_id;
  j["s1_speaker"] = p.s1_speaker;
  j["s2_speaker"] = p.s2_speaker;
  j["len1_samples"] = p.len1;
  j["len2_samples"] = p.len2;
  j["offset1_samples"] = p.overlap.offset1;
  j["offset2_samples"] = p.overlap.offset2;
  j["offset1_s"] = p.overlap.offset1_s();
  j["offset2_s"] = p.overlap.offset2_s();
  j["overlap_samples"] = p.overlap.overlap;
  j["overlap_s"] = p.overlap.overlap_s();
  j["overlap_capped"] = p.overlap.capped;
  j["target_index"] = p.target_index;
  j["sir_db"] = p.sir_db;
  j["room"] = {{"length_m", p.room.length_m},
               {"width_m", p.room.width_m},
               {"height_m", p.room.height_m},
               {"rt60_s", p.room.rt60_s},
               {"mic", detail::vec3_json(p.room.mic)}};
  j["placement1"] = placement_json(p.placement1);
  j["placement2"] = placement_json(p.placement2);
  j["max_order"] = p.max_order;
  j["realized_sir_db"] = r.realized_sir_db;
  j["s1_gain"] = r.s1_gain;
  j["normalization_gain"] = r.normalization_gain;
  j["duration_s"] = r.duration_s;
  j["attributes_tar"] = attributes_json(r.attributes_tar());
  j["attributes_inf"] = attributes_json(r.attributes_inf());
  j["separation"] = {{"leak_db", detail::opt_json(r.separation.leak_db)},
                     {"label", r.separation.label},
                     {"si_sdr1", r.separation.si_sdr1},
                     {"si_sdr2", r.separation.si_sdr2},
                     {"si_sdr_mix", r.separation.si_sdr_mix}};
  json cues = json::array();
  for (const auto& c : r.cue_labels) cues.push_back(cue_json(c));
  j["cue_labels"] = cues;
  json prompts = json::array();
  for (const auto& pr : r.prompts) prompts.push_back(prompt_json(pr));
  j["prompts"] = prompts;
  if (with_audio_paths)
    j["audio"] = {{"mixture", audio_path(p.id, "mix")},
                  {"target", audio_path(p.id, "target")},
                  {"interf", audio_path(p.id, "interf")}};
  else
    j["audio"] = nullptr;
  return j;
}

inline MixtureRecord record_from_json(const json& j) {
  MixtureRecord r;
  MixturePlan& p = r.plan;
  p.id = j.at("id").get<std::string>();
  p.split = j.at("split").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.s1_id = j.at("s1_id").get<std::string>();
  p.s2_id = j.at("s2_id").get<std::string>();
  p.s1_speaker = j.at("s1_speaker").get<std::string>();
  p.s2_speaker = j.at("s2_speaker").get<std::string>();
  p.len1 = j.at("len1_samples").get<std::size_t>();
  p.len2 = j.at("len2_samples").get<std::size_t>();
  p.overlap.offset1 = j.at("offset1_samples").get<std::size_t>();
  p.overlap.offset2 = j.at("offset2_samples").get<std::size_t>();
  p.overlap.overlap = j.at("overlap_samples").get<std::size_t>();
  p.overlap.capped = j.at("overlap_capped").get<bool>();
  p.target_index = j.at("target_index").get<int>();
  p.sir_db = j.at("sir_db").get<double>();
  const json& room = j.at("room");
  p.room.length_m = room.at("length_m").get<double>();
  p.room.width_m = room.at("width_m").get<double>();
  p.room.height_m = room.at("height_m").get<double>();
  p.room.rt60_s = room.at("rt60_s").get<double>();
  p.room.mic = detail::vec3_get(room.at("mic"));
  p.placement1 = placement_from_json(j.at("placement1"));
  p.placement2 = placement_from_json(j.at("placement2"));
  p.max_order = j.at("max_order").get<int>();
  r.realized_sir_db = j.at("realized_sir_db").get<double>();
  r.s1_gain = j.at("s1_gain").get<double>();
  r.normalization_gain = j.at("normalization_gain").get<double>();
  r.duration_s = j.at("duration_s").get<double>();
  const AttributeVector tar = attributes_from_json(j.at("attributes_tar"));
  const AttributeVector inf = attributes_from_json(j.at("attributes_inf"));
  r.attr1 = p.target_index == 1 ? tar : inf;
  r.attr2 = p.target_index == 1 ? inf : tar;
  const json& s = j.at("separation");
  r.separation.leak_db = detail::opt_get<double>(s, "leak_db");
  r.separation.label = s.at("label").get<int>();
  r.separation.si_sdr1 = s.at("si_sdr1").get<double>();
  r.separation.si_sdr2 = s.at("si_sdr2").get<double>();
  r.separation.si_sdr_mix = s.at("si_sdr_mix").get<double>();
  for (const auto& c : j.at("cue_labels")) r.cue_labels.push_back(cue_from_json(c));
  for (const auto& pr : j.at("prompts")) r.prompts.push_back(prompt_from_json(pr));
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation rows (one JSON object per line).

inline json eval_row_json(const EvalRow& r) {
  return {{"mixture_id", r.mixture_id},
          {"cue", r.cue},
          {"kind", std::string(cue_kind_name(r.kind))},
          {"config", std::string(prompt_config_name(r.config))},
          {"category", r.category},
          {"true_label", r.true_label},
          {"pred_label", r.pred_label},
          {"prob", r.prob},
          {"si_sdr", detail::opt_json(r.si_sdr)},
          {"si_sdri", detail::opt_json(r.si_sdri)},
          {"delta", detail::opt_json(r.delta)},
          {"value_tar", detail::opt_json(r.value_tar)},
          {"value_inf", detail::opt_json(r.value_inf)},
          {"ind_tar", detail::opt_json(r.ind_tar)},
          {"ind_inf", detail::opt_json(r.ind_inf)}};
}

inline EvalRow eval_row_from_json(const json& j) {
  EvalRow r;
  r.mixture_id = j.at("mixture_id").get<std::string>();
  r.cue = j.at("cue").get<std::string>();
  r.kind = parse_cue_kind(j.at("kind").get<std::string>());
  r.config = parse_prompt_config(j.at("config").get<std::string>());
  r.category = j.at("category").get<std::string>();
  r.true_label = j.at("true_label").get<int>();
  r.pred_label = j.at("pred_label").get<int>();
  r.prob = j.at("prob").get<double>();
  r.si_sdr = detail::opt_get<double>(j, "si_sdr");
  r.si_sdri = detail::opt_get<double>(j, "si_sdri");
  r.delta = detail::opt_get<double>(j, "delta");
  r.value_tar = detail::opt_get<double>(j, "value_tar");
  r.value_inf = detail::opt_get<double>(j, "value_inf");
  r.ind_tar = detail::opt_get<std::string>(j, "ind_tar");
  r.ind_inf = detail::opt_get<std::string>(j, "ind_inf");
  return r;
}

}  // namespace relcue
