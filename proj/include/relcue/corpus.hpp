#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcue/attributes.hpp"
#include "relcue/error.hpp"
#include "relcue/rng.hpp"
#include "relcue/serialize.hpp"
#include "relcue/wav_io.hpp"
#include "relcue/wave.hpp"

namespace relcue {

struct Manifest {
  std::filesystem::path base_dir;  // relative WAV paths resolve against it
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const {
    const std::filesystem::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }

  std::vector<const ManifestEntry*> split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(where + ": " + e.what());
    }
    ManifestEntry e = utterance_from_json(j, where);
    if (!ids.insert(e.meta.utterance_id).second)
      throw Error(where + ": duplicate utterance id '" + e.meta.utterance_id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& e : m.entries) out << utterance_json(e.meta, e.path, e.split).dump() << '\n';
}

// Speakers must not be shared across splits.
inline void check_disjoint_splits(const Manifest& m) {
  std::map<std::string, std::string> speaker_split;
  for (const auto& e : m.entries) {
    if (e.split.empty())
      throw Error("manifest: utterance '" + e.meta.utterance_id + "' has no split tag");
    const auto [it, fresh] = speaker_split.emplace(e.meta.speaker_id, e.split);
    if (!fresh && it->second != e.split)
      throw Error("manifest: speaker '" + e.meta.speaker_id + "' appears in splits '" +
                  it->second + "' and '" + e.split + "'");
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus: harmonic voiced "words" with a syllabic amplitude
// envelope, word boundaries, and leading/trailing silence.

struct SynthCorpusSpec {
  std::map<std::string, std::size_t> speakers_per_split{
      {"train", 12}, {"validation", 4}, {"test", 8}};
  std::size_t utterances_per_speaker = 6;
  Range speech_s{2.0, 7.0};
  double no_words_fraction = 0.2;
  double no_transcription_fraction = 0.1;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& synth_lexicon(Language l) {
  static const std::map<Language, std::vector<std::string>> lex{
      {Language::en,
       {"morning", "river", "table", "window", "quiet", "garden", "yellow", "paper", "music",
        "over", "little", "open", "city", "happy", "station", "water", "forest", "evening",
        "coffee", "bright"}},
      {Language::fr,
       {"bonjour", "maison", "rivière", "fenêtre", "jardin", "musique", "soleil", "demain",
        "école", "heureux", "voiture", "forêt", "café", "lumière", "matin", "ville", "beaucoup",
        "chanson", "été", "oiseau"}},
      {Language::de,
       {"morgen", "fenster", "garten", "wasser", "musik", "schön", "straße", "häuser", "grün",
        "über", "kaffee", "abend", "sonne", "bäume", "freude", "stadt", "zeitung", "brücke",
        "apfel", "müde"}},
      {Language::es,
       {"mañana", "ventana", "jardín", "música", "ciudad", "río", "agua", "camino", "árbol",
        "corazón", "feliz", "noche", "estación", "bosque", "pequeño", "abierto", "café",
        "canción", "azul", "montaña"}},
      {Language::zh,
       {"你好", "早上", "河流", "窗户", "花园", "音乐", "城市", "快乐", "火车", "森林", "晚上",
        "咖啡", "明天", "学校", "天气", "朋友", "水", "山", "书", "路"}},
  };
  return lex.at(l);
}

inline const std::vector<std::string>& synth_emotions() {
  static const std::vector<std::string> e{"neutral", "happy", "sad", "angry"};
  return e;
}

namespace detail {

struct SynthVoice {
  Gender gender;
  double base_f0;
  double age;
  Language language;
};

inline SynthVoice synth_voice(Rng& rng) {
  SynthVoice v;
  v.gender = rng.coin() ? Gender::female : Gender::male;
  const double lo = v.gender == Gender::female ? 165.0 : 85.0;
  const double hi = v.gender == Gender::female ? 255.0 : 155.0;
  v.base_f0 = std::exp(rng.uniform(std::log(lo), std::log(hi)));
  v.age = std::floor(rng.uniform(18.0, 76.0));
  v.language = kLanguages[rng.index(kLanguages.size())];
  return v;
}

// Appends one word of voiced sound: `syllables` raised-cosine bumps.
inline void synth_word(std::vector<double>& out, double& phase, std::size_t n,
                       std::size_t syllables, double f0, double range, double t0, Rng& rng,
                       double gain) {
  const double fs = kSampleRate;
  const int harmonics = std::max(1, static_cast<int>(3800.0 / (f0 * (1.0 + range))));
  const double wobble_hz = rng.uniform(0.5, 1.5);
  const double wobble_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double per_syl = static_cast<double>(n) / static_cast<double>(syllables);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) / fs;
    const double f = f0 * (1.0 + range * std::sin(2.0 * std::numbers::pi * wobble_hz * t + wobble_phase));
    phase += 2.0 * std::numbers::pi * f / fs;
    if (phase > 2.0 * std::numbers::pi * 1e6) phase = std::fmod(phase, 2.0 * std::numbers::pi);
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) s += std::sin(h * phase) / h;
    const double pos = std::fmod(static_cast<double>(i), per_syl) / per_syl;
    const double env = 0.35 + 0.65 * std::sin(std::numbers::pi * pos);
    out.push_back(gain * env * s);
  }
}

}  // namespace detail

// Writes WAVs under `dir/wav` and `dir/manifest.jsonl`; returns the manifest.
inline Manifest synthesize_corpus(const std::filesystem::path& dir, const SynthCorpusSpec& spec) {
  require(spec.speech_s.lo > 0.5 && spec.speech_s.lo <= spec.speech_s.hi,
          "synth corpus: invalid speech duration range");
  std::filesystem::create_directories(dir / "wav");
  Manifest m;
  m.base_dir = dir;
  std::size_t speaker_no = 0;
  for (const auto& [split, n_speakers] : spec.speakers_per_split) {
    for (std::size_t s = 0; s < n_speakers; ++s, ++speaker_no) {
      char spk[32];
      std::snprintf(spk, sizeof spk, "spk%03zu", speaker_no);
      Rng vrng(derive_seed(spec.seed, std::string("voice:") + spk));
      const detail::SynthVoice voice = detail::synth_voice(vrng);
      const auto& lex = synth_lexicon(voice.language);
      for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
        char uid[48];
        std::snprintf(uid, sizeof uid, "%s_u%02zu", spk, u);
        Rng rng(derive_seed(spec.seed, std::string("utt:") + uid));
        const double target = rng.uniform(spec.speech_s.lo, spec.speech_s.hi);
        const double f0 = voice.base_f0 * std::exp(rng.uniform(-0.08, 0.08));
        const double range = rng.uniform(0.02, 0.15);
        const double rate = rng.uniform(3.0, 6.5);  // syllables per second
        const double gain = 0.3 * std::pow(10.0, rng.uniform(-9.0, 3.0) / 20.0);
        const double lead = rng.uniform(0.1, 0.5);

        std::vector<double> x(static_cast<std::size_t>(lead * kSampleRate), 0.0);
        std::vector<WordBoundary> words;
        std::string text;
        double phase = 0.0;
        double t = lead;
        while (t - lead < target) {
          const std::string& w = lex[rng.index(lex.size())];
          const std::size_t syl = std::max<std::size_t>(1, count_syllables(w, voice.language));
          const auto n = static_cast<std::size_t>(static_cast<double>(syl) / rate * kSampleRate);
          detail::synth_word(x, phase, n, syl, f0, range, t, rng, gain);
          words.push_back({w, t, t + static_cast<double>(n) / kSampleRate});
          if (!text.empty() && voice.language != Language::zh) text += ' ';
          text += w;
          t += static_cast<double>(n) / kSampleRate;
          const double pause = rng.uniform() < 0.1 ? rng.uniform(0.3, 0.9) : rng.uniform(0.02, 0.15);
          x.insert(x.end(), static_cast<std::size_t>(pause * kSampleRate), 0.0);
          t = static_cast<double>(x.size()) / kSampleRate;
        }
        x.insert(x.end(), static_cast<std::size_t>(rng.uniform(0.1, 0.5) * kSampleRate), 0.0);
        for (double& v : x) v += 3e-5 * rng.normal();

        ManifestEntry e;
        e.meta.utterance_id = uid;
        e.meta.speaker_id = spk;
        e.meta.language = voice.language;
        e.meta.gender = voice.gender;
        e.meta.age_years = voice.age;
        e.meta.emotion = synth_emotions()[rng.index(synth_emotions().size())];
        if (rng.uniform() >= spec.no_transcription_fraction) e.meta.transcription = text;
        if (rng.uniform() >= spec.no_words_fraction) e.meta.word_boundaries = words;
        e.path = std::string("wav/") + uid + ".wav";
        e.split = split;
        write_wav(dir / e.path, WaveBuffer(std::move(x)));
        m.entries.push_back(std::move(e));
      }
    }
  }
  write_manifest(dir / "manifest.jsonl", m);
  return m;
}

}  // namespace relcue
