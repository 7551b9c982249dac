#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relcue/attributes.hpp"
#include "relcue/cues.hpp"
#include "relcue/error.hpp"
#include "relcue/prompts.hpp"
#include "relcue/rng.hpp"
#include "relcue/room.hpp"
#include "relcue/wave.hpp"

namespace relcue {

struct TrimResult {
  WaveBuffer audio;
  std::size_t cut_begin = 0;  // samples removed from the front
  std::size_t cut_end = 0;    // one past the last kept input sample
};

// Cut to the first/last word boundary when aligned, else to the VAD envelope.
inline TrimResult trim_silence_ex(const WaveBuffer& w, const UtteranceMeta& meta,
                                  const VadConfig& vad = {}) {
  std::vector<Segment> speech;
  if (meta.word_boundaries && !meta.word_boundaries->empty())
    speech = word_intervals(*meta.word_boundaries);
  else
    speech = detect_speech_segments(w, vad);
  if (speech.empty())
    throw Error("trim_silence: no speech detected in '" + meta.utterance_id + "'");
  const Segment span{speech.front().start_s, speech.back().end_s};
  const auto [b, e] = segment_samples(span, w.sample_rate(), w.size());
  if (e <= b)
    throw Error("trim_silence: empty speech span in '" + meta.utterance_id + "'");
  return {w.slice(b, e), b, e};
}

inline WaveBuffer trim_silence(const WaveBuffer& w, const UtteranceMeta& meta,
                               const VadConfig& vad = {}) {
  return trim_silence_ex(w, meta, vad).audio;
}

// Word boundaries re-expressed on the trimmed timeline.
inline UtteranceMeta shift_meta(UtteranceMeta meta, double shift_s) {
  if (meta.word_boundaries)
    for (auto& wb : *meta.word_boundaries) {
      wb.start_s = std::max(0.0, wb.start_s - shift_s);
      wb.end_s = std::max(0.0, wb.end_s - shift_s);
    }
  return meta;
}

struct OverlapRules {
  double short_source_s = 3.0;
  double long_span_s = 6.0;
  friend bool operator==(const OverlapRules&, const OverlapRules&) = default;
};

struct OverlapPlan {
  std::size_t offset1 = 0;  // samples
  std::size_t offset2 = 0;
  std::size_t overlap = 0;
  bool capped = false;  // long-source formula exceeded min(len1, len2)
  int sample_rate = kSampleRate;

  double offset1_s() const { return static_cast<double>(offset1) / sample_rate; }
  double offset2_s() const { return static_cast<double>(offset2) / sample_rate; }
  double overlap_s() const { return static_cast<double>(overlap) / sample_rate; }
};

inline std::size_t interval_overlap(std::size_t b1, std::size_t n1, std::size_t b2,
                                    std::size_t n2) {
  const std::size_t lo = std::max(b1, b2);
  const std::size_t hi = std::min(b1 + n1, b2 + n2);
  return hi > lo ? hi - lo : 0;
}

// Lengths in samples.
inline OverlapPlan plan_overlap(std::size_t n1, std::size_t n2, Rng& rng,
                                const OverlapRules& rules = {}, int fs = kSampleRate) {
  require(n1 > 0 && n2 > 0, "plan_overlap: source lengths must be positive");
  OverlapPlan p;
  p.sample_rate = fs;
  const std::size_t shorter = std::min(n1, n2);
  const std::size_t longer = std::max(n1, n2);
  if (static_cast<double>(shorter) < rules.short_source_s * fs) {
    const std::size_t off = static_cast<std::size_t>(rng.index(longer - shorter + 1));
    (n1 <= n2 ? p.offset1 : p.offset2) = off;
    p.overlap = shorter;
    return p;
  }
  const auto span = static_cast<std::size_t>(std::llround(rules.long_span_s * fs));
  p.offset1 = 0;
  p.offset2 = span > n2 ? span - n2 : 0;
  const long long formula = static_cast<long long>(n1 + n2) - static_cast<long long>(span);
  p.overlap = interval_overlap(p.offset1, n1, p.offset2, n2);
  p.capped = formula > static_cast<long long>(shorter);
  return p;
}

inline OverlapPlan plan_overlap_s(double len1_s, double len2_s, Rng& rng,
                                  const OverlapRules& rules = {}, int fs = kSampleRate) {
  require(len1_s > 0.0 && len2_s > 0.0, "plan_overlap: source lengths must be positive");
  return plan_overlap(static_cast<std::size_t>(std::llround(len1_s * fs)),
                      static_cast<std::size_t>(std::llround(len2_s * fs)), rng, rules, fs);
}

struct MixturePlan {
  std::string id;
  std::string split;
  std::string s1_id, s2_id;
  std::string s1_speaker, s2_speaker;
  std::size_t len1 = 0, len2 = 0;  // trimmed source lengths, samples
  OverlapPlan overlap;
  int target_index = 1;
  double sir_db = 0.0;
  RoomSpec room;
  SourcePlacement placement1, placement2;
  int max_order = 30;
  std::uint64_t seed = 0;
};

struct RenderedMixture {
  WaveBuffer mixture;
  WaveBuffer rev1, rev2;  // reverberant, placed, scaled; sum to mixture
  double s1_gain = 1.0;
  double normalization_gain = 1.0;
  double realized_sir_db = 0.0;
};

inline constexpr double kMixturePeak = 0.9;

// S2 stays fixed, S1 is scaled to the planned SIR over the full placed
// signals; all three buffers share one final peak normalization gain.
inline RenderedMixture render_mixture(const MixturePlan& plan, const WaveBuffer& w1,
                                      const WaveBuffer& w2, const Rir& rir1,
                                      const Rir& rir2, double peak = kMixturePeak) {
  require(w1.size() == plan.len1 && w2.size() == plan.len2,
          "render_mixture: plan inconsistent with source lengths");
  const WaveBuffer r1 = apply_rir(w1, rir1);
  const WaveBuffer r2 = apply_rir(w2, rir2);
  const std::size_t total =
      std::max(plan.overlap.offset1 + r1.size(), plan.overlap.offset2 + r2.size());
  const WaveBuffer p1 = r1.placed(plan.overlap.offset1, total);
  const WaveBuffer p2 = r2.placed(plan.overlap.offset2, total);

  RenderedMixture out;
  out.s1_gain = sir_gain(p1, p2, plan.sir_db);
  std::vector<double> a(total), b(p2.vec()), m(total);
  for (std::size_t i = 0; i < total; ++i) {
    a[i] = p1[i] * out.s1_gain;
    m[i] = a[i] + b[i];
  }
  double pk = 0.0;
  for (double v : m) pk = std::max(pk, std::abs(v));
  out.normalization_gain = pk > 0.0 ? peak / pk : 1.0;
  for (std::size_t i = 0; i < total; ++i) {
    a[i] *= out.normalization_gain;
    b[i] *= out.normalization_gain;
    m[i] = a[i] + b[i];
  }
  out.rev1 = WaveBuffer(std::move(a), w1.sample_rate());
  out.rev2 = WaveBuffer(std::move(b), w2.sample_rate());
  out.mixture = WaveBuffer(std::move(m), w1.sample_rate());
  out.realized_sir_db = measured_sir_db(out.rev1, out.rev2);
  return out;
}

inline const WaveBuffer& rev_target(const RenderedMixture& r, int target_index) {
  return target_index == 1 ? r.rev1 : r.rev2;
}

inline const WaveBuffer& rev_interf(const RenderedMixture& r, int target_index) {
  return target_index == 1 ? r.rev2 : r.rev1;
}

// Stand-in for a separator: the stored components, optionally with
// cross-talk at a fixed signal-to-leak ratio per channel.
inline std::pair<WaveBuffer, WaveBuffer> oracle_separate(const RenderedMixture& r,
                                                         std::optional<double> leak_db) {
  if (!leak_db) return {r.rev1, r.rev2};
  require(*leak_db > 0.0, "oracle_separate: leak_db must be positive");
  const double e1 = energy(r.rev1.samples());
  const double e2 = energy(r.rev2.samples());
  require(e1 > 0.0 && e2 > 0.0, "oracle_separate: silent component");
  const double ratio = std::pow(10.0, -*leak_db / 10.0);
  const double g12 = std::sqrt(e1 / e2 * ratio);
  const double g21 = std::sqrt(e2 / e1 * ratio);
  std::vector<double> a(r.rev1.vec()), b(r.rev2.vec());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] += g12 * r.rev2[i];
    b[i] += g21 * r.rev1[i];
  }
  return {WaveBuffer(std::move(a), r.rev1.sample_rate()),
          WaveBuffer(std::move(b), r.rev2.sample_rate())};
}

struct MixerConfig {
  Range sir_db{-6.0, 6.0};
  OverlapRules overlap;
  double max_source_s = 12.0;
  double peak = kMixturePeak;
  friend bool operator==(const MixerConfig&, const MixerConfig&) = default;
};

// Everything but the sources is drawn from (seed, split, ordinal).
inline MixturePlan sample_plan(std::uint64_t seed, const std::string& split,
                               std::size_t ordinal, std::size_t len1, std::size_t len2,
                               const MixerConfig& mix, const RoomSampling& rooms) {
  MixturePlan p;
  p.split = split;
  p.seed = derive_seed(seed, split, ordinal);
  char id[64];
  std::snprintf(id, sizeof id, "%s_%06zu", split.c_str(), ordinal);
  p.id = id;
  p.len1 = len1;
  p.len2 = len2;
  Rng overlap_rng(derive_seed(p.seed, "overlap", 0));
  p.overlap = plan_overlap(len1, len2, overlap_rng, mix.overlap);
  Rng room_rng(derive_seed(p.seed, "room", 0));
  p.room = sample_room(room_rng, rooms);
  p.placement1 = sample_placement(room_rng, p.room, rooms);
  p.placement2 = sample_placement(room_rng, p.room, rooms);
  p.max_order = rooms.max_order;
  Rng sir_rng(derive_seed(p.seed, "sir", 0));
  p.sir_db = sir_rng.uniform(mix.sir_db.lo, mix.sir_db.hi);
  Rng target_rng(derive_seed(p.seed, "target", 0));
  p.target_index = target_rng.coin() ? 1 : 2;
  return p;
}

struct SeparationSummary {
  std::optional<double> leak_db;
  int label = 1;  // make_label on the separated channels
  double si_sdr1 = 0.0, si_sdr2 = 0.0, si_sdr_mix = 0.0;  // against the target
  friend bool operator==(const SeparationSummary&, const SeparationSummary&) = default;
};

struct MixtureRecord {
  MixturePlan plan;
  AttributeVector attr1, attr2;  // sources S1, S2
  std::vector<CueLabel> cue_labels;
  std::vector<PromptRecord> prompts;
  SeparationSummary separation;
  double realized_sir_db = 0.0;
  double s1_gain = 1.0;
  double normalization_gain = 1.0;
  double duration_s = 0.0;
  std::optional<RenderedMixture> audio;

  const AttributeVector& attributes_tar() const { return plan.target_index == 1 ? attr1 : attr2; }
  const AttributeVector& attributes_inf() const { return plan.target_index == 1 ? attr2 : attr1; }
};

}  // namespace relcue
