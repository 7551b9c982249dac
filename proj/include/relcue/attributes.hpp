#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relcue/error.hpp"
#include "relcue/wave.hpp"

namespace relcue {

enum class Language { en, fr, de, es, zh };
enum class Gender { male, female };

inline constexpr std::array<Language, 5> kLanguages = {
    Language::en, Language::fr, Language::de, Language::es, Language::zh};

inline std::string_view language_code(Language l) {
  switch (l) {
    case Language::en: return "en";
    case Language::fr: return "fr";
    case Language::de: return "de";
    case Language::es: return "es";
    case Language::zh: return "zh";
  }
  return "?";
}

// Category string used in cue labels and prompts.
inline std::string_view language_name(Language l) {
  switch (l) {
    case Language::en: return "English";
    case Language::fr: return "French";
    case Language::de: return "German";
    case Language::es: return "Spanish";
    case Language::zh: return "Chinese";
  }
  return "?";
}

inline Language parse_language(std::string_view s) {
  for (Language l : kLanguages)
    if (s == language_code(l)) return l;
  throw Error("unsupported language '" + std::string(s) + "'");
}

inline std::string_view gender_name(Gender g) {
  return g == Gender::male ? "male" : "female";
}

inline Gender parse_gender(std::string_view s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  throw Error("unsupported gender '" + std::string(s) + "'");
}

// The twelve speech attributes. The first eight are continuous.
enum class Attribute {
  mean_f0,
  f0_span,
  age,
  speaking_duration,
  speaking_rate,
  rms_energy,
  distance,
  appearance_time,
  language,
  gender,
  emotion,
  transcription,
};

inline constexpr std::array<Attribute, 12> kAllAttributes = {
    Attribute::mean_f0,         Attribute::f0_span,
    Attribute::age,             Attribute::speaking_duration,
    Attribute::speaking_rate,   Attribute::rms_energy,
    Attribute::distance,        Attribute::appearance_time,
    Attribute::language,        Attribute::gender,
    Attribute::emotion,         Attribute::transcription};

inline constexpr std::array<Attribute, 8> kContinuousAttributes = {
    Attribute::mean_f0,       Attribute::f0_span,    Attribute::age,
    Attribute::speaking_duration, Attribute::speaking_rate,
    Attribute::rms_energy,    Attribute::distance,   Attribute::appearance_time};

inline bool is_continuous(Attribute a) {
  return static_cast<int>(a) <= static_cast<int>(Attribute::appearance_time);
}

inline std::string_view attribute_id(Attribute a) {
  switch (a) {
    case Attribute::mean_f0: return "mean_f0";
    case Attribute::f0_span: return "f0_span";
    case Attribute::age: return "age";
    case Attribute::speaking_duration: return "speaking_duration";
    case Attribute::speaking_rate: return "speaking_rate";
    case Attribute::rms_energy: return "rms_energy";
    case Attribute::distance: return "distance";
    case Attribute::appearance_time: return "appearance_time";
    case Attribute::language: return "language";
    case Attribute::gender: return "gender";
    case Attribute::emotion: return "emotion";
    case Attribute::transcription: return "transcription";
  }
  return "?";
}

inline Attribute parse_attribute(std::string_view s) {
  for (Attribute a : kAllAttributes)
    if (s == attribute_id(a)) return a;
  throw Error("unknown attribute '" + std::string(s) + "'");
}

struct WordBoundary {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
  friend bool operator==(const WordBoundary&, const WordBoundary&) = default;
};

struct UtteranceMeta {
  std::string utterance_id;
  std::string speaker_id;
  Language language = Language::en;
  Gender gender = Gender::female;
  std::optional<double> age_years;
  std::optional<std::string> emotion;
  std::optional<std::string> transcription;
  std::optional<std::vector<WordBoundary>> word_boundaries;

  void validate() const {
    if (age_years)
      require(*age_years > 0.0 && *age_years < 120.0,
              "utterance " + utterance_id + ": age out of range (0, 120)");
    if (word_boundaries) {
      double prev_end = -1e300;
      for (const auto& w : *word_boundaries) {
        require(w.end_s >= w.start_s,
                "utterance " + utterance_id + ": word ends before it starts");
        require(w.start_s >= prev_end - 1e-9,
                "utterance " + utterance_id +
                    ": word boundaries overlap or are out of order");
        prev_end = w.end_s;
      }
    }
  }
};

struct AttributeVector {
  std::optional<double> mean_f0_hz;
  std::optional<double> f0_span_hz;
  std::optional<double> age_years;
  double speaking_duration_s = 0.0;
  std::optional<double> speaking_rate_spm;
  double rms_energy_db = kRmsFloorDb;
  double distance_m = 1.0;
  double appearance_time_s = 0.0;
  Language language = Language::en;
  Gender gender = Gender::female;
  std::optional<std::string> emotion;
  std::optional<std::string> transcription;

  std::optional<double> continuous(Attribute a) const {
    switch (a) {
      case Attribute::mean_f0: return mean_f0_hz;
      case Attribute::f0_span: return f0_span_hz;
      case Attribute::age: return age_years;
      case Attribute::speaking_duration: return speaking_duration_s;
      case Attribute::speaking_rate: return speaking_rate_spm;
      case Attribute::rms_energy: return rms_energy_db;
      case Attribute::distance: return distance_m;
      case Attribute::appearance_time: return appearance_time_s;
      default: return std::nullopt;
    }
  }

  // Category string of a discrete attribute, as used in cue labels.
  std::optional<std::string> discrete(Attribute a) const {
    switch (a) {
      case Attribute::language: return std::string(language_name(language));
      case Attribute::gender: return std::string(gender_name(gender));
      case Attribute::emotion: return emotion;
      case Attribute::transcription: return transcription;
      default: return std::nullopt;
    }
  }

  bool has(Attribute a) const {
    return is_continuous(a) ? continuous(a).has_value()
                            : discrete(a).has_value();
  }

  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

// ---------------------------------------------------------------------------
// F0 tracking (YIN).

struct YinConfig {
  double fmin_hz = 50.0;
  double fmax_hz = 600.0;
  double threshold = 0.1;
  double frame_s = 0.0464;
  double hop_s = 0.010;
};

struct F0Frame {
  double time_s = 0.0;
  std::optional<double> f0_hz;
};

using F0Track = std::vector<F0Frame>;

inline F0Track estimate_f0_track(const WaveBuffer& w, const YinConfig& cfg = {}) {
  require(cfg.fmin_hz < cfg.fmax_hz, "estimate_f0_track: fmin must be below fmax");
  require(cfg.fmin_hz >= 50.0 && cfg.fmax_hz <= 600.0,
          "estimate_f0_track: fmin/fmax must lie within [50, 600] Hz");
  const int fs = w.sample_rate();
  const auto frame = static_cast<std::size_t>(std::lround(cfg.frame_s * fs));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_s * fs));
  require(w.size() >= frame + hop, "estimate_f0_track: input shorter than two frames");

  const std::size_t window = frame / 2;
  const std::size_t tau_max =
      std::min(static_cast<std::size_t>(std::floor(fs / cfg.fmin_hz)), frame - window - 1);
  const std::size_t tau_min =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(fs / cfg.fmax_hz)));

  const auto x = w.samples();
  const std::size_t n_frames = 1 + (w.size() - frame) / hop;
  F0Track track;
  track.reserve(n_frames);
  std::vector<double> diff(tau_max + 2, 0.0);
  std::vector<double> cmnd(tau_max + 2, 1.0);

  for (std::size_t k = 0; k < n_frames; ++k) {
    const std::size_t start = k * hop;
    const double t = (static_cast<double>(start) + frame / 2.0) / fs;
    const double* f = x.data() + start;

    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      double d = 0.0;
      for (std::size_t j = 0; j < window; ++j) {
        const double delta = f[j] - f[j + tau];
        d += delta * delta;
      }
      diff[tau] = d;
    }
    cmnd[0] = 1.0;
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      running += diff[tau];
      cmnd[tau] = running > 0.0 ? diff[tau] * static_cast<double>(tau) / running : 1.0;
    }

    std::optional<std::size_t> best;
    for (std::size_t tau = tau_min; tau <= tau_max; ++tau) {
      if (cmnd[tau] < cfg.threshold) {
        while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
        best = tau;
        break;
      }
    }
    F0Frame out{t, std::nullopt};
    if (best) {
      const double a = cmnd[*best - 1];
      const double b = cmnd[*best];
      const double c = cmnd[*best + 1];
      const double denom = a - 2.0 * b + c;
      double shift = 0.0;
      if (std::abs(denom) > 1e-12) shift = std::clamp(0.5 * (a - c) / denom, -1.0, 1.0);
      const double f0 = fs / (static_cast<double>(*best) + shift);
      if (f0 >= cfg.fmin_hz && f0 <= cfg.fmax_hz) out.f0_hz = f0;
    }
    track.push_back(out);
  }
  return track;
}

inline std::optional<double> mean_f0(const F0Track& track) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& fr : track) {
    if (!fr.f0_hz) continue;
    sum += *fr.f0_hz;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline std::optional<double> f0_span(const F0Track& track) {
  std::optional<double> lo, hi;
  for (const auto& fr : track) {
    if (!fr.f0_hz) continue;
    lo = lo ? std::min(*lo, *fr.f0_hz) : *fr.f0_hz;
    hi = hi ? std::max(*hi, *fr.f0_hz) : *fr.f0_hz;
  }
  if (!lo) return std::nullopt;
  return *hi - *lo;
}

// ---------------------------------------------------------------------------
// Energy VAD.

struct VadConfig {
  double frame_s = 0.030;
  double hop_s = 0.010;
  double abs_threshold_db = -45.0;
  double floor_margin_db = 10.0;
  // The percentile noise floor is trusted only when the loudest frame sits
  // at least this far above it; otherwise the signal has no silent frames.
  double min_dynamic_range_db = 20.0;
  double floor_percentile = 0.10;
  double hangover_s = 0.100;
};

inline std::vector<Segment> detect_speech_segments(const WaveBuffer& w,
                                                   const VadConfig& cfg = {}) {
  if (w.empty()) return {};
  const int fs = w.sample_rate();
  const auto frame = static_cast<std::size_t>(std::lround(cfg.frame_s * fs));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_s * fs));
  const auto x = w.samples();

  std::vector<double> db;
  std::vector<double> centers;
  for (std::size_t start = 0;; start += hop) {
    const std::size_t end = std::min(start + frame, x.size());
    const double e = energy(x.subspan(start, end - start));
    db.push_back(to_db_power(e / static_cast<double>(end - start)));
    centers.push_back((static_cast<double>(start) + (end - start) / 2.0) / fs);
    if (end == x.size()) break;
  }

  std::vector<double> sorted(db);
  std::sort(sorted.begin(), sorted.end());
  const double peak = sorted.back();
  const auto pi = static_cast<std::size_t>(
      std::floor(cfg.floor_percentile * static_cast<double>(sorted.size() - 1)));
  const double floor_db = sorted[pi];
  double threshold = cfg.abs_threshold_db;
  if (peak - floor_db >= cfg.min_dynamic_range_db)
    threshold = std::max(threshold, floor_db + cfg.floor_margin_db);

  const double half_hop = 0.5 * cfg.hop_s;
  std::vector<Segment> segs;
  for (std::size_t k = 0; k < db.size(); ++k) {
    if (db[k] <= threshold) continue;
    Segment s{std::max(0.0, centers[k] - half_hop),
              std::min(w.duration(), centers[k] + half_hop)};
    if (!segs.empty() && s.start_s - segs.back().end_s <= cfg.hangover_s + 1e-9)
      segs.back().end_s = s.end_s;
    else
      segs.push_back(s);
  }
  return segs;
}

// Word and short-pause time; pauses longer than `max_pause_s` are excluded.
inline double speaking_duration(const std::vector<Segment>& intervals,
                                double max_pause_s = 0.6) {
  double total = 0.0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    total += intervals[i].duration();
    if (i == 0) continue;
    const double pause = intervals[i].start_s - intervals[i - 1].end_s;
    if (pause > 0.0 && pause <= max_pause_s + 1e-9) total += pause;
  }
  return total;
}

inline std::vector<Segment> word_intervals(const std::vector<WordBoundary>& words) {
  std::vector<Segment> out;
  out.reserve(words.size());
  for (const auto& wb : words) out.push_back({wb.start_s, wb.end_s});
  return out;
}

// ---------------------------------------------------------------------------
// Syllable counting.

namespace detail {

inline std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      len = 2;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      len = 3;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      len = 4;
    } else {
      throw Error("invalid UTF-8 lead byte");
    }
    if (i + len > s.size()) throw Error("truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) throw Error("invalid UTF-8 continuation byte");
      cp = (cp << 6) | (cc & 0x3f);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline char32_t fold_case(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c == 0x152) return 0x153;  // OE ligature
  if (c == 0x178) return 0xFF;   // Y with diaeresis
  return c;
}

inline bool is_letter(char32_t c) {
  if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z')) return true;
  if (c >= 0xC0 && c <= 0x24F && c != 0xD7 && c != 0xF7) return true;
  return false;
}

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == 0x3000 ||
         c == 0xA0;
}

inline bool is_cjk_ideograph(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x20000 && c <= 0x2A6DF);
}

}  // namespace detail

// Vowel letters per language, lowercase, UTF-8.
struct VowelSets {
  std::map<Language, std::string> vowels = {
      {Language::en, "aeiouy"},
      {Language::es, "aeiouáéíóúü"},
      {Language::fr, "aeiouàâæèéêëîïôœùûü"},
      {Language::de, "aeiouäöü"},
  };
};

inline std::size_t count_syllables(std::string_view text, Language lang,
                                   const VowelSets& sets = {}) {
  const std::u32string cps = detail::decode_utf8(text);
  if (lang == Language::zh) {
    return static_cast<std::size_t>(
        std::count_if(cps.begin(), cps.end(), detail::is_cjk_ideograph));
  }
  const auto it = sets.vowels.find(lang);
  if (it == sets.vowels.end())
    throw Error("count_syllables: no vowel set for language " +
                std::string(language_code(lang)));
  const std::u32string vowels = detail::decode_utf8(it->second);

  std::size_t count = 0;
  bool in_word = false;
  bool prev_vowel = false;
  for (char32_t raw : cps) {
    if (detail::is_space(raw)) {
      in_word = false;
      prev_vowel = false;
      continue;
    }
    // Punctuation and digits inside a token are stripped, so letters on
    // either side of them are adjacent.
    if (!detail::is_letter(raw)) continue;
    const char32_t c = detail::fold_case(raw);
    const bool vowel = vowels.find(c) != std::u32string::npos;
    if (vowel && !(in_word && prev_vowel)) ++count;
    in_word = true;
    prev_vowel = vowel;
  }
  return count;
}

// Syllables per minute.
inline double speaking_rate(std::string_view text, Language lang,
                            double speaking_duration_s, const VowelSets& sets = {}) {
  require(speaking_duration_s > 0.0, "speaking_rate: speaking duration must be positive");
  return 60.0 * static_cast<double>(count_syllables(text, lang, sets)) /
         speaking_duration_s;
}

// Onset of the first speech interval on the mixture timeline.
inline double appearance_time(double placement_offset_s,
                              const std::vector<Segment>& speech) {
  if (speech.empty()) return placement_offset_s;
  return placement_offset_s + speech.front().start_s;
}

// ---------------------------------------------------------------------------
// Composition.

struct AttributeConfig {
  YinConfig yin;
  VadConfig vad;
  VowelSets vowels;
  double max_pause_s = 0.6;
};

// Per-utterance measurements on the clean (trimmed) signal.
struct UtteranceFeatures {
  std::optional<double> mean_f0_hz;
  std::optional<double> f0_span_hz;
  std::vector<Segment> speech;  // words if aligned, else VAD segments
  double speaking_duration_s = 0.0;
  std::optional<double> speaking_rate_spm;
  friend bool operator==(const UtteranceFeatures&, const UtteranceFeatures&) = default;
};

inline UtteranceFeatures analyze_utterance(const WaveBuffer& clean,
                                           const UtteranceMeta& meta,
                                           const AttributeConfig& cfg = {}) {
  UtteranceFeatures f;
  const F0Track track = estimate_f0_track(clean, cfg.yin);
  f.mean_f0_hz = mean_f0(track);
  f.f0_span_hz = f0_span(track);
  f.speech = meta.word_boundaries ? word_intervals(*meta.word_boundaries)
                                  : detect_speech_segments(clean, cfg.vad);
  f.speaking_duration_s =
      std::min(speaking_duration(f.speech, cfg.max_pause_s), clean.duration());
  if (meta.transcription && f.speaking_duration_s > 0.0)
    f.speaking_rate_spm = speaking_rate(*meta.transcription, meta.language,
                                        f.speaking_duration_s, cfg.vowels);
  return f;
}

// Where and how an utterance sits in a mixture.
struct PlacementContext {
  double offset_s = 0.0;
  double distance_m = 1.0;
  // Reverberant, placed, scaled component on the mixture timeline. When
  // absent the RMS energy is measured on the clean signal.
  const WaveBuffer* reverberant = nullptr;
};

inline AttributeVector attributes_from_features(const UtteranceFeatures& f,
                                                const UtteranceMeta& meta,
                                                const WaveBuffer& clean,
                                                const PlacementContext& place) {
  AttributeVector av;
  av.mean_f0_hz = f.mean_f0_hz;
  av.f0_span_hz = f.f0_span_hz;
  av.age_years = meta.age_years;
  av.speaking_duration_s = f.speaking_duration_s;
  av.speaking_rate_spm = f.speaking_rate_spm;
  av.distance_m = place.distance_m;
  av.appearance_time_s = appearance_time(place.offset_s, f.speech);
  av.language = meta.language;
  av.gender = meta.gender;
  av.emotion = meta.emotion;
  av.transcription = meta.transcription;

  if (place.reverberant) {
    const WaveBuffer& rev = *place.reverberant;
    std::vector<Segment> shifted;
    for (const Segment& s : f.speech) {
      const double b = s.start_s + place.offset_s;
      const double e = std::min(s.end_s + place.offset_s, rev.duration());
      if (b < e) shifted.push_back({b, e});
    }
    av.rms_energy_db = shifted.empty() ? rms_db(rev) : rms_db(rev, shifted);
  } else {
    av.rms_energy_db = f.speech.empty() ? rms_db(clean) : rms_db(clean, f.speech);
  }
  return av;
}

inline AttributeVector extract_all(const WaveBuffer& clean, const UtteranceMeta& meta,
                                   const PlacementContext& place,
                                   const AttributeConfig& cfg = {}) {
  return attributes_from_features(analyze_utterance(clean, meta, cfg), meta, clean,
                                  place);
}

}  // namespace relcue
