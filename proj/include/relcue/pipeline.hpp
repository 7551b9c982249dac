#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "relcue/analysis.hpp"
#include "relcue/attributes.hpp"
#include "relcue/classifier.hpp"
#include "relcue/config.hpp"
#include "relcue/corpus.hpp"
#include "relcue/cues.hpp"
#include "relcue/embeddings.hpp"
#include "relcue/error.hpp"
#include "relcue/mixer.hpp"
#include "relcue/prompts.hpp"
#include "relcue/room.hpp"
#include "relcue/serialize.hpp"
#include "relcue/wav_io.hpp"

namespace relcue {

// Runs fn(i) for i in [0, n) on `jobs` threads; rethrows the first error.
inline void parallel_for(std::size_t n, std::size_t jobs,
                         const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard lock(err_mu);
          if (err) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& p, const std::string& s) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

// ---------------------------------------------------------------------------
// Utterances.

struct PreparedUtterance {
  const ManifestEntry* entry = nullptr;
  UtteranceMeta meta;  // word boundaries on the trimmed timeline
  WaveBuffer audio;    // trimmed
  UtteranceFeatures features;
};

using PreparedPtr = std::shared_ptr<const PreparedUtterance>;

inline PreparedPtr prepare_utterance(const Manifest& m, const ManifestEntry& e,
                                     const AttributeConfig& cfg) {
  const WaveBuffer raw = read_wav(m.resolve(e));
  const TrimResult tr = trim_silence_ex(raw, e.meta, cfg.vad);
  auto p = std::make_shared<PreparedUtterance>();
  p->entry = &e;
  p->meta = shift_meta(e.meta, static_cast<double>(tr.cut_begin) / raw.sample_rate());
  p->audio = tr.audio;
  p->features = analyze_utterance(p->audio, p->meta, cfg);
  return p;
}

// Trimmed, analyzed utterances of one split, in manifest order; sources
// longer than the configured maximum are left out.
inline std::vector<PreparedPtr> prepare_pool(const Manifest& m, const std::string& split,
                                             const PipelineConfig& cfg) {
  const auto entries = m.split(split);
  std::vector<PreparedPtr> all(entries.size());
  parallel_for(entries.size(), cfg.jobs, [&](std::size_t i) {
    all[i] = prepare_utterance(m, *entries[i], cfg.attributes);
  });
  std::vector<PreparedPtr> pool;
  std::set<std::string> speakers;
  for (auto& p : all)
    if (p->audio.duration() <= cfg.mixer.max_source_s) {
      speakers.insert(p->meta.speaker_id);
      pool.push_back(p);
    }
  if (speakers.size() < 2)
    throw Error("split '" + split + "': at least two speakers are required, found " +
                std::to_string(speakers.size()));
  return pool;
}

// ---------------------------------------------------------------------------
// Mixtures.

inline std::pair<std::size_t, std::size_t> sample_pair(const std::vector<PreparedPtr>& pool,
                                                       std::uint64_t seed) {
  Rng rng(derive_seed(seed, "pair"));
  const std::size_t i = static_cast<std::size_t>(rng.index(pool.size()));
  std::vector<std::size_t> others;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (pool[k]->meta.speaker_id != pool[i]->meta.speaker_id) others.push_back(k);
  require(!others.empty(), "sample_pair: no second speaker available");
  return {i, others[static_cast<std::size_t>(rng.index(others.size()))]};
}

inline Rir make_rir(const RoomSpec& room, const SourcePlacement& p, const PipelineConfig& cfg) {
  const RirOptions opt{cfg.calibrate_absorption};
  if (!cfg.rir_cache.empty()) return RirCache(cfg.rir_cache).get(room, p, cfg.room.max_order, opt);
  return image_source_rir(room, p, cfg.room.max_order, opt);
}

inline SeparationSummary summarize_separation(const RenderedMixture& r, int target_index,
                                              std::optional<double> leak_db) {
  const auto [s1, s2] = oracle_separate(r, leak_db);
  const WaveBuffer& ref = rev_target(r, target_index);
  SeparationSummary s;
  s.leak_db = leak_db;
  s.label = make_label(s1, s2, ref);
  s.si_sdr1 = si_sdr(s1, ref);
  s.si_sdr2 = si_sdr(s2, ref);
  s.si_sdr_mix = si_sdr(r.mixture, ref);
  return s;
}

inline MixtureRecord simulate_mixture(std::size_t ordinal, const std::string& split,
                                      const std::vector<PreparedPtr>& pool,
                                      const PipelineConfig& cfg, bool keep_audio = false) {
  const std::uint64_t mseed = derive_seed(cfg.seed, split, ordinal);
  const auto [i, j] = sample_pair(pool, mseed);
  const PreparedUtterance& u1 = *pool[i];
  const PreparedUtterance& u2 = *pool[j];

  MixtureRecord rec;
  rec.plan = sample_plan(cfg.seed, split, ordinal, u1.audio.size(), u2.audio.size(), cfg.mixer,
                         cfg.room);
  MixturePlan& p = rec.plan;
  p.s1_id = u1.meta.utterance_id;
  p.s2_id = u2.meta.utterance_id;
  p.s1_speaker = u1.meta.speaker_id;
  p.s2_speaker = u2.meta.speaker_id;

  const Rir rir1 = make_rir(p.room, p.placement1, cfg);
  const Rir rir2 = make_rir(p.room, p.placement2, cfg);
  RenderedMixture r = render_mixture(p, u1.audio, u2.audio, rir1, rir2, cfg.mixer.peak);

  rec.attr1 = attributes_from_features(
      u1.features, u1.meta, u1.audio,
      {p.overlap.offset1_s(), p.placement1.horizontal_distance_m, &r.rev1});
  rec.attr2 = attributes_from_features(
      u2.features, u2.meta, u2.audio,
      {p.overlap.offset2_s(), p.placement2.horizontal_distance_m, &r.rev2});
  rec.separation = summarize_separation(r, p.target_index, cfg.leak_db);
  rec.realized_sir_db = r.realized_sir_db;
  rec.s1_gain = r.s1_gain;
  rec.normalization_gain = r.normalization_gain;
  rec.duration_s = r.mixture.duration();
  if (keep_audio) rec.audio = std::move(r);
  return rec;
}

// Each record is handed to `sink` as soon as it is rendered; `sink` may be
// called concurrently. Records are returned in ordinal order without audio.
inline std::vector<MixtureRecord> build_dataset(
    const std::vector<PreparedPtr>& pool, const std::string& split, std::size_t count,
    const PipelineConfig& cfg,
    const std::function<void(const MixtureRecord&)>& sink = nullptr) {
  std::vector<MixtureRecord> out(count);
  parallel_for(count, cfg.jobs, [&](std::size_t k) {
    MixtureRecord rec = simulate_mixture(k, split, pool, cfg, static_cast<bool>(sink));
    require(rec.plan.s1_speaker != rec.plan.s2_speaker, "build_dataset: speakers coincide");
    if (sink) sink(rec);
    rec.audio.reset();
    out[k] = std::move(rec);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Labels and prompts.

// Equal-frequency bins over every source instance of the fitting records.
inline QuantizerSet fit_quantizers(const std::vector<MixtureRecord>& records,
                                   const PipelineConfig& cfg) {
  bool have_train = false;
  for (const auto& r : records) have_train |= r.plan.split == "train";
  QuantizerSet qs;
  for (const auto& [a, names] : cfg.quantizers) {
    std::vector<double> values;
    for (const auto& r : records) {
      if (have_train && r.plan.split != "train") continue;
      for (const auto* av : {&r.attr1, &r.attr2})
        if (auto x = av->continuous(a)) values.push_back(*x);
    }
    if (values.empty()) continue;
    qs[a] = fit_independent_quantizer(a, values, names.size(), names);
  }
  return qs;
}

inline void label_records(std::vector<MixtureRecord>& records, const QuantizerSet& qs,
                          const PipelineConfig& cfg) {
  for (auto& r : records)
    r.cue_labels = cue_labels_for_pair(r.attributes_tar(), r.attributes_inf(), cfg.thresholds, qs);
}

inline TemplateTable load_templates(const PipelineConfig& cfg) {
  return cfg.templates.empty() ? TemplateTable::defaults() : TemplateTable::load(cfg.templates);
}

inline void prompt_records(std::vector<MixtureRecord>& records, const PipelineConfig& cfg) {
  const TemplateTable t = load_templates(cfg);
  for (auto& r : records)
    r.prompts = generate_prompts(r.cue_labels, r.plan.id, r.plan.target_index, cfg.seed, t,
                                 cfg.prompts);
}

// ---------------------------------------------------------------------------
// Stage 2.

// The oracle calibrates its value scales on the train split of `calibration`,
// or on all of it when no train mixtures are present.
inline std::unique_ptr<EmbeddingProvider> make_provider(
    const PipelineConfig& cfg, const std::vector<MixtureRecord>& calibration = {}) {
  if (cfg.embeddings.provider == "oracle") {
    bool have_train = false;
    for (const auto& r : calibration) have_train |= r.plan.split == "train";
    std::vector<const AttributeVector*> sources;
    for (const auto& r : calibration)
      if (!have_train || r.plan.split == "train") sources.insert(sources.end(), {&r.attr1, &r.attr2});
    return std::make_unique<OracleProvider>(OracleConfig{
        cfg.embeddings.noise_sigma, derive_seed(cfg.seed, "oracle"), fit_oracle_scales(sources)});
  }
  if (cfg.embeddings.audio_store.empty() || cfg.embeddings.text_store.empty())
    throw ConfigError(
        "embeddings.provider: \"file\" requires embeddings.audio_store and "
        "embeddings.text_store");
  return std::make_unique<FileProvider>(load_store(cfg.embeddings.audio_store),
                                        load_store(cfg.embeddings.text_store));
}

inline std::size_t provider_text_dim(const EmbeddingProvider& p) {
  if (const auto* f = dynamic_cast<const FileProvider*>(&p)) return f->text_dim();
  return p.dim();
}

struct ChannelEmbeddings {
  Embedding z1, z2;
};

inline ChannelEmbeddings embed_channels(const MixtureRecord& r, const EmbeddingProvider& p) {
  return {p.embed_audio({audio_key(r.plan.id, 1), &r.attr1, &r.attr2, r.separation.leak_db}),
          p.embed_audio({audio_key(r.plan.id, 2), &r.attr2, &r.attr1, r.separation.leak_db})};
}

inline Classification classify_mixture(const MixtureRecord& r, const PromptRecord& prompt,
                                       const EmbeddingProvider& provider,
                                       const ProjectionHead& head,
                                       const ClassifierConfig& cfg) {
  const ChannelEmbeddings z = embed_channels(r, provider);
  return classify_embeddings(provider.embed_text({prompt.text, &prompt, r.plan.id}), z.z1, z.z2, head, cfg);
}

inline bool trainable(const PromptRecord& p) {
  if (p.kind() != CueKind::relative) return false;
  for (const auto& c : p.cues)
    if (!c.discriminative()) return false;
  return true;
}

// Relative prompts without "similar"/"Same" cues; channel order is
// randomized per sample with the label following the permutation.
inline std::vector<TrainingSample> training_samples(const std::vector<MixtureRecord>& records,
                                                    const EmbeddingProvider& provider,
                                                    std::uint64_t seed) {
  std::vector<TrainingSample> out;
  for (const auto& r : records) {
    const ChannelEmbeddings z = embed_channels(r, provider);
    for (const auto& p : r.prompts) {
      if (!trainable(p)) continue;
      TrainingSample s{provider.embed_text({p.text, &p, r.plan.id}), z.z1, z.z2, r.separation.label};
      Rng rng(derive_seed(seed, "channel_order", out.size()));
      if (rng.coin()) {
        std::swap(s.z1, s.z2);
        s.label = 1 - s.label;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

inline ProjectionHead initial_head(const PipelineConfig& cfg, const EmbeddingProvider& p) {
  const std::size_t in = provider_text_dim(p), out = p.dim();
  return cfg.head_init == "random" ? ProjectionHead::random(in, out, derive_seed(cfg.seed, "head"))
                                   : ProjectionHead::identity(in, out);
}

inline std::vector<EvalRow> classify_records(const std::vector<MixtureRecord>& records,
                                             const EmbeddingProvider& provider,
                                             const ProjectionHead& head,
                                             const PipelineConfig& cfg,
                                             const QuantizerSet& qs) {
  std::vector<std::vector<EvalRow>> per(records.size());
  parallel_for(records.size(), cfg.jobs, [&](std::size_t k) {
    const MixtureRecord& r = records[k];
    const ChannelEmbeddings z = embed_channels(r, provider);
    for (const auto& p : r.prompts) {
      const Classification c =
          classify_embeddings(provider.embed_text({p.text, &p, r.plan.id}), z.z1, z.z2, head, cfg.classifier);
      EvalRow row;
      row.mixture_id = r.plan.id;
      row.kind = p.kind();
      row.config = p.config;
      row.true_label = r.separation.label;
      row.pred_label = c.pred_index == 1 ? 1 : 0;
      row.prob = c.prob;
      const double chosen = c.pred_index == 1 ? r.separation.si_sdr1 : r.separation.si_sdr2;
      row.si_sdr = chosen;
      row.si_sdri = chosen - r.separation.si_sdr_mix;
      if (p.config == PromptConfig::individual) {
        const CueLabel& l = p.cues.front();
        row.cue = std::string(attribute_id(l.attribute));
        row.category = l.category;
        if (is_continuous(l.attribute)) {
          row.value_tar = r.attributes_tar().continuous(l.attribute);
          row.value_inf = r.attributes_inf().continuous(l.attribute);
          if (l.kind == CueKind::relative) {
            row.delta = l.delta;
          } else if (row.value_tar && row.value_inf) {
            row.delta = attribute_delta(cfg.thresholds.at(l.attribute), *row.value_tar,
                                        *row.value_inf);
          }
          const auto q = qs.find(l.attribute);
          if (q != qs.end() && row.value_tar && row.value_inf) {
            row.ind_tar = q->second.names[q->second.bin(*row.value_tar)];
            row.ind_inf = q->second.names[q->second.bin(*row.value_inf)];
          }
        }
      } else {
        row.cue = std::string(prompt_config_name(p.config));
        for (std::size_t i = 0; i < p.cues.size(); ++i)
          row.category += (i ? "+" : "") + std::string(attribute_id(p.cues[i].attribute)) + "=" +
                          p.cues[i].category;
      }
      per[k].push_back(std::move(row));
    }
  });
  std::vector<EvalRow> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline std::vector<Table> analysis_tables(const std::vector<EvalRow>& rows,
                                          const QuantizerSet& qs, const PipelineConfig& cfg) {
  std::vector<Table> tables;
  tables.push_back(accuracy_table(accuracy_by_cue(rows)));
  tables.push_back(crosstab_table(group_crosstab(rows, qs, cfg.thresholds)));
  const auto curves = accuracy_curves(rows);
  tables.push_back(logistic_table(curves));
  for (const auto& c : curves) tables.push_back(curve_table(c));
  return tables;
}

// ---------------------------------------------------------------------------
// Dataset directories: index.json, mixtures/<id>.json, audio/<id>_*.wav,
// quantizers.json, config.json.

inline std::string json_text(const json& j) { return j.dump(2) + "\n"; }

inline void save_record(const std::filesystem::path& dir, const MixtureRecord& r,
                        bool with_audio) {
  write_text_file(dir / "mixtures" / (r.plan.id + ".json"), json_text(record_json(r, with_audio)));
}

inline void write_record_audio(const std::filesystem::path& dir, const MixtureRecord& r) {
  require(r.audio.has_value(), "write_record_audio: record carries no audio");
  std::filesystem::create_directories(dir / "audio");
  write_wav(dir / audio_path(r.plan.id, "mix"), r.audio->mixture);
  write_wav(dir / audio_path(r.plan.id, "target"), rev_target(*r.audio, r.plan.target_index));
  write_wav(dir / audio_path(r.plan.id, "interf"), rev_interf(*r.audio, r.plan.target_index));
}

struct Dataset {
  std::vector<MixtureRecord> records;
  std::vector<bool> has_audio;
};

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path))
    throw Error("dataset " + dir.string() + ": missing index.json (run simulate first)");
  const json index = json::parse(read_text_file(index_path));
  Dataset d;
  for (const auto& e : index.at("mixtures")) {
    const json j = json::parse(read_text_file(dir / e.at("metadata").get<std::string>()));
    d.records.push_back(record_from_json(j));
    d.has_audio.push_back(!j.at("audio").is_null());
  }
  return d;
}

inline void save_dataset_records(const std::filesystem::path& dir, const Dataset& d) {
  for (std::size_t i = 0; i < d.records.size(); ++i) save_record(dir, d.records[i], d.has_audio[i]);
}

inline std::string dataset_hash(const std::filesystem::path& dir) {
  const json index = json::parse(read_text_file(dir / "index.json"));
  std::uint64_t h = fnv1a(index.dump());
  for (const auto& e : index.at("mixtures"))
    h = fnv1a(read_text_file(dir / e.at("metadata").get<std::string>()), h);
  return hex64(h);
}

inline std::vector<MixtureRecord> select_split(const std::vector<MixtureRecord>& all,
                                               const std::string& split) {
  if (split.empty() || split == "all") return all;
  std::vector<MixtureRecord> out;
  for (const auto& r : all)
    if (r.plan.split == split) out.push_back(r);
  if (out.empty()) throw Error("no mixtures in split '" + split + "'");
  return out;
}

// Each command returns a one-line summary.

inline std::string cmd_simulate(const PipelineConfig& cfg, const std::filesystem::path& manifest_path,
                                const std::filesystem::path& out, const std::string& split,
                                std::optional<std::size_t> count) {
  const Manifest m = read_manifest(manifest_path);
  check_disjoint_splits(m);
  std::vector<std::string> splits;
  if (split == "all")
    splits = split_names();
  else if (std::find(split_names().begin(), split_names().end(), split) != split_names().end())
    splits = {split};
  else
    throw Error("--split: expected train, validation, test or all; got '" + split + "'");

  std::filesystem::create_directories(out / "mixtures");
  json index_entries = json::array();
  const auto index_path = out / "index.json";
  if (std::filesystem::exists(index_path)) {
    const json previous = json::parse(read_text_file(index_path));
    for (const auto& e : previous.at("mixtures"))
      if (std::find(splits.begin(), splits.end(), e.at("split").get<std::string>()) == splits.end())
        index_entries.push_back(e);
  }

  std::size_t total = 0;
  for (const auto& s : splits) {
    const std::size_t n = count ? *count
                          : s == "train"      ? cfg.counts.train
                          : s == "validation" ? cfg.counts.validation
                                              : cfg.counts.test;
    if (n == 0) continue;
    const auto pool = prepare_pool(m, s, cfg);
    const auto records = build_dataset(pool, s, n, cfg, [&](const MixtureRecord& r) {
      save_record(out, r, cfg.write_audio);
      if (cfg.write_audio) write_record_audio(out, r);
    });
    for (const auto& r : records)
      index_entries.push_back(
          {{"id", r.plan.id}, {"split", s}, {"metadata", "mixtures/" + r.plan.id + ".json"}});
    total += n;
  }
  std::sort(index_entries.begin(), index_entries.end(),
            [](const json& a, const json& b) { return a.at("id") < b.at("id"); });
  write_text_file(index_path, json_text({{"mixtures", index_entries}}));
  write_text_file(out / "config.json", json_text(config_to_json(cfg)));
  return "simulated " + std::to_string(total) + " mixtures into " + out.string();
}

// Utterance-level attributes of the clean, trimmed sources.
inline std::string cmd_attributes(const PipelineConfig& cfg, const std::filesystem::path& manifest_path,
                                  const std::filesystem::path& out) {
  const Manifest m = read_manifest(manifest_path);
  std::vector<std::string> lines(m.entries.size());
  parallel_for(m.entries.size(), cfg.jobs, [&](std::size_t i) {
    const PreparedPtr p = prepare_utterance(m, m.entries[i], cfg.attributes);
    const AttributeVector av = attributes_from_features(p->features, p->meta, p->audio, {});
    json j = attributes_json(av);
    j.erase("distance");
    j.erase("appearance_time");
    json speech = json::array();
    for (const auto& s : p->features.speech) speech.push_back(json::array({s.start_s, s.end_s}));
    lines[i] = json({{"id", p->meta.utterance_id},
                     {"split", m.entries[i].split},
                     {"trimmed_duration_s", p->audio.duration()},
                     {"attributes", j},
                     {"speech", speech}})
                   .dump() +
               "\n";
  });
  std::string all;
  for (const auto& l : lines) all += l;
  write_text_file(out, all);
  return "wrote attributes of " + std::to_string(lines.size()) + " utterances to " + out.string();
}

inline std::string cmd_cues(const PipelineConfig& cfg, const std::filesystem::path& dir,
                            const std::optional<std::filesystem::path>& quantizers_in) {
  Dataset d = load_dataset(dir);
  const QuantizerSet qs = quantizers_in
                              ? quantizers_from_json(json::parse(read_text_file(*quantizers_in)))
                              : fit_quantizers(d.records, cfg);
  label_records(d.records, qs, cfg);
  write_text_file(dir / "quantizers.json", json_text(quantizers_json(qs)));
  save_dataset_records(dir, d);
  std::size_t n = 0;
  for (const auto& r : d.records) n += r.cue_labels.size();
  return "labeled " + std::to_string(d.records.size()) + " mixtures with " + std::to_string(n) +
         " cues";
}

inline std::string cmd_prompts(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  Dataset d = load_dataset(dir);
  for (const auto& r : d.records)
    if (r.cue_labels.empty())
      throw Error("mixture " + r.plan.id + ": no cue labels (run cues first)");
  prompt_records(d.records, cfg);
  save_dataset_records(dir, d);
  std::size_t n = 0;
  for (const auto& r : d.records) n += r.prompts.size();
  return "generated " + std::to_string(n) + " prompts for " + std::to_string(d.records.size()) +
         " mixtures";
}

inline QuantizerSet load_quantizers_if_present(const std::filesystem::path& dir) {
  const auto p = dir / "quantizers.json";
  if (!std::filesystem::exists(p)) return {};
  return quantizers_from_json(json::parse(read_text_file(p)));
}

inline std::string cmd_train(const PipelineConfig& cfg, const std::filesystem::path& dir,
                             const std::filesystem::path& out, const std::string& split) {
  const Dataset d = load_dataset(dir);
  const auto records = select_split(d.records, split.empty() ? "train" : split);
  const auto provider = make_provider(cfg, d.records);
  const auto samples = training_samples(records, *provider, derive_seed(cfg.seed, "train"));
  if (samples.empty()) throw Error("train: no trainable prompts (run prompts first)");
  TrainingSchedule sched = cfg.training;
  sched.seed = derive_seed(cfg.seed, "schedule");
  const TrainingResult res =
      train_projection(samples, initial_head(cfg, *provider), cfg.classifier, sched);
  std::filesystem::create_directories(out);
  save_head(res.head, out / "head.bin");
  write_text_file(out / "loss.csv", loss_trace_csv(res.trace));
  const double acc = dataset_accuracy(res.head, samples, cfg.classifier);
  const double loss = res.epoch_loss.empty() ? dataset_loss(res.head, samples, cfg.classifier)
                                             : res.epoch_loss.back();
  write_text_file(out / "training.json",
                  json_text({{"samples", samples.size()},
                             {"final_loss", loss},
                             {"train_accuracy", acc},
                             {"steps", res.trace.size()}}));
  return "trained on " + std::to_string(samples.size()) + " prompts: loss " + fmt_num(loss, 4) +
         ", accuracy " + fmt_num(acc, 4);
}

inline ProjectionHead head_for(const EmbeddingProvider& p,
                               const std::optional<std::filesystem::path>& head_path) {
  if (head_path) return load_head(*head_path);
  return ProjectionHead::identity(provider_text_dim(p), p.dim());
}

inline std::vector<EvalRow> run_classification(const PipelineConfig& cfg,
                                               const std::filesystem::path& dir,
                                               const std::optional<std::filesystem::path>& head_path,
                                               const std::string& split) {
  const Dataset d = load_dataset(dir);
  const auto records = select_split(d.records, split);
  const auto provider = make_provider(cfg, d.records);
  const ProjectionHead head = head_for(*provider, head_path);
  return classify_records(records, *provider, head, cfg, load_quantizers_if_present(dir));
}

inline std::string rows_jsonl(const std::vector<EvalRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += eval_row_json(r).dump() + "\n";
  return s;
}

inline std::vector<EvalRow> read_rows(const std::filesystem::path& p) {
  std::vector<EvalRow> rows;
  std::istringstream in(read_text_file(p));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(eval_row_from_json(json::parse(line)));
  return rows;
}

inline std::string cmd_classify(const PipelineConfig& cfg, const std::filesystem::path& dir,
                                const std::optional<std::filesystem::path>& head_path,
                                const std::string& split, const std::filesystem::path& out) {
  const auto rows = run_classification(cfg, dir, head_path, split);
  write_text_file(out, rows_jsonl(rows));
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.correct();
  return "classified " + std::to_string(rows.size()) + " prompts, accuracy " +
         fmt_num(rows.empty() ? 0.0 : static_cast<double>(ok) / rows.size(), 4);
}

inline std::string cmd_evaluate(const PipelineConfig& cfg, const std::filesystem::path& dir,
                                const std::optional<std::filesystem::path>& head_path,
                                const std::string& split, const std::filesystem::path& out) {
  const auto rows = run_classification(cfg, dir, head_path, split);
  const Table t = accuracy_table(accuracy_by_cue(rows));
  write_text_file(out / "predictions.jsonl", rows_jsonl(rows));
  write_text_file(out / "accuracy_by_cue.csv", to_csv(t));
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.correct();
  return "evaluated " + std::to_string(rows.size()) + " prompts, accuracy " +
         fmt_num(rows.empty() ? 0.0 : static_cast<double>(ok) / rows.size(), 4);
}

inline std::string cmd_analyze(const PipelineConfig& cfg, const std::filesystem::path& dir,
                               const std::filesystem::path& predictions,
                               const std::filesystem::path& out) {
  const auto rows = read_rows(predictions);
  const auto tables = analysis_tables(rows, load_quantizers_if_present(dir), cfg);
  export_report(tables, {dataset_hash(dir), config_hash(cfg), cfg.seed}, out);
  return "wrote " + std::to_string(tables.size()) + " report tables to " + out.string();
}

}  // namespace relcue
