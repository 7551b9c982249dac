#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "relcue/attributes.hpp"
#include "relcue/cues.hpp"
#include "relcue/error.hpp"
#include "relcue/rng.hpp"

namespace relcue {

enum class PromptConfig { individual, random, all };

inline std::string_view prompt_config_name(PromptConfig c) {
  switch (c) {
    case PromptConfig::individual: return "individual";
    case PromptConfig::random: return "random";
    case PromptConfig::all: return "all";
  }
  return "";
}

inline PromptConfig parse_prompt_config(std::string_view s) {
  if (s == "individual") return PromptConfig::individual;
  if (s == "random") return PromptConfig::random;
  if (s == "all") return PromptConfig::all;
  throw Error("unknown prompt config '" + std::string(s) + "'");
}

struct PromptRecord {
  std::string text;
  PromptConfig config = PromptConfig::individual;
  std::vector<CueLabel> cues;  // non-empty
  int target_index = 1;

  std::vector<Attribute> cue_types() const {
    std::vector<Attribute> out;
    for (const auto& c : cues) out.push_back(c.attribute);
    return out;
  }
  CueKind kind() const { return cues.front().kind; }
  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

// Lines of `attribute<TAB>category<TAB>phrase`. A `*` category matches any
// category; `{category}` in a phrase is replaced by the category name.
inline constexpr const char* kDefaultTemplates =
    "gender\t*\tthe {category} speaker\n"
    "gender\tSame\tthe same gender\n"
    "mean_f0\t*\ta {category} pitch\n"
    "f0_span\t*\ta {category} pitch range\n"
    "rms_energy\t*\ta {category} voice\n"
    "distance\tnearer\ta position nearer to the microphone\n"
    "distance\tfarther\ta position farther from the microphone\n"
    "distance\tnear\ta position near the microphone\n"
    "distance\tfar\ta position far from the microphone\n"
    "distance\tsimilar\ta similar distance to the microphone\n"
    "age\tolder\tan older age\n"
    "age\tyounger\ta younger age\n"
    "age\tsimilar\ta similar age\n"
    "speaking_rate\t*\ta {category} speaking rate\n"
    "speaking_duration\t*\ta {category} speaking duration\n"
    "appearance_time\tearlier\tan earlier start\n"
    "appearance_time\tlater\ta later start\n"
    "appearance_time\tsimilar\ta similar start time\n"
    "language\tSame\tthe same language\n"
    "language\t*\tspeech in {category}\n"
    "emotion\tSame\tthe same emotion\n"
    "emotion\t*\ta {category} tone\n"
    "transcription\tSame\tthe same words\n"
    "transcription\t*\tthe words \"{category}\"\n";

inline const std::vector<std::string>& default_verbs() {
  static const std::vector<std::string> v{"extract", "separate", "isolate"};
  return v;
}

class TemplateTable {
 public:
  static TemplateTable parse(std::string_view tsv, const std::string& name = "<templates>") {
    TemplateTable t;
    std::istringstream in{std::string(tsv)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto a = line.find('\t');
      const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
      if (b == std::string::npos)
        throw Error(name + ":" + std::to_string(lineno) +
                    ": expected attribute<TAB>category<TAB>phrase");
      const Attribute attr = parse_attribute(line.substr(0, a));
      const std::string cat = line.substr(a + 1, b - a - 1);
      const std::string phrase = line.substr(b + 1);
      if (phrase.empty())
        throw Error(name + ":" + std::to_string(lineno) + ": empty phrase");
      t.entries_[{attr, cat}] = phrase;
    }
    return t;
  }

  static TemplateTable defaults() { return parse(kDefaultTemplates, "<builtin>"); }

  static TemplateTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open template file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  std::string phrase(Attribute a, const std::string& category) const {
    auto it = entries_.find({a, category});
    if (it == entries_.end()) it = entries_.find({a, "*"});
    if (it == entries_.end())
      throw Error("no template for attribute " + std::string(attribute_id(a)) +
                  " category '" + category + "'");
    std::string out = it->second;
    static const std::string ph = "{category}";
    for (auto pos = out.find(ph); pos != std::string::npos; pos = out.find(ph, pos))
      out.replace(pos, ph.size(), category), pos += category.size();
    return out;
  }

 private:
  std::map<std::pair<Attribute, std::string>, std::string> entries_;
};

inline std::string verbalize_cue(const CueLabel& label, const TemplateTable& t) {
  return t.phrase(label.attribute, label.category);
}

struct PromptOptions {
  std::vector<std::string> verbs = default_verbs();
  // Drop "similar" and "Same" labels before generating prompts.
  bool filter_similar = true;
  // Also emit one individual prompt per independent label.
  bool independent_prompts = true;
  friend bool operator==(const PromptOptions&, const PromptOptions&) = default;
};

namespace detail {

inline std::string join_phrases(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

inline std::string cue_key(const CueLabel& l) {
  return std::string(attribute_id(l.attribute)) + ":" + std::string(cue_kind_name(l.kind)) +
         ":" + l.category;
}

}  // namespace detail

// Deterministic choice of verb from (mixture id, key).
inline const std::string& choose_verb(const PromptOptions& opt, const std::string& mixture_id,
                                      const std::string& key) {
  require(!opt.verbs.empty(), "prompt_gen.verbs: verb list is empty");
  const std::uint64_t h = fnv1a(key, fnv1a(mixture_id + "\x1f"));
  return opt.verbs[h % opt.verbs.size()];
}

// A discriminative gender label becomes the sentence subject; every other
// label is listed in a "with" clause.
inline std::string compose_prompt(const std::vector<CueLabel>& cues, const std::string& verb,
                                  const TemplateTable& t) {
  std::string subject = "the speaker";
  std::vector<std::string> phrases;
  for (const auto& c : cues) {
    if (c.attribute == Attribute::gender && c.category != kSame)
      subject = verbalize_cue(c, t);
    else
      phrases.push_back(verbalize_cue(c, t));
  }
  std::string s = "Please " + verb + " " + subject;
  if (!phrases.empty()) s += " with " + detail::join_phrases(phrases);
  return s + ".";
}

inline std::vector<CueLabel> eligible_labels(const std::vector<CueLabel>& labels,
                                             CueKind kind, bool filter_similar) {
  std::vector<CueLabel> out;
  for (const auto& l : labels)
    if (l.kind == kind && (!filter_similar || l.discriminative())) out.push_back(l);
  return out;
}

inline std::vector<PromptRecord> generate_individual(const std::vector<CueLabel>& eligible,
                                                     const std::string& mixture_id,
                                                     int target_index,
                                                     const TemplateTable& t,
                                                     const PromptOptions& opt = {}) {
  std::vector<PromptRecord> out;
  for (const auto& l : eligible) {
    const std::string& verb = choose_verb(opt, mixture_id, detail::cue_key(l));
    out.push_back({compose_prompt({l}, verb, t), PromptConfig::individual, {l}, target_index});
  }
  return out;
}

// Absent unless n >= 4; subset size uniform in [2, n-1].
inline std::optional<PromptRecord> generate_random(const std::vector<CueLabel>& eligible,
                                                   const std::string& mixture_id,
                                                   int target_index, Rng& rng,
                                                   const TemplateTable& t,
                                                   const PromptOptions& opt = {}) {
  const std::size_t n = eligible.size();
  if (n < 4) return std::nullopt;
  const std::size_t k = 2 + static_cast<std::size_t>(rng.index(n - 2));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i)
    std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.index(n - i))]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<CueLabel> chosen;
  for (std::size_t i : idx) chosen.push_back(eligible[i]);
  const std::string& verb = choose_verb(opt, mixture_id, "random");
  return PromptRecord{compose_prompt(chosen, verb, t), PromptConfig::random, chosen,
                      target_index};
}

inline std::optional<PromptRecord> generate_all(const std::vector<CueLabel>& eligible,
                                                const std::string& mixture_id,
                                                int target_index, const TemplateTable& t,
                                                const PromptOptions& opt = {}) {
  if (eligible.size() < 2) return std::nullopt;
  const std::string& verb = choose_verb(opt, mixture_id, "all");
  return PromptRecord{compose_prompt(eligible, verb, t), PromptConfig::all, eligible,
                      target_index};
}

// Individual, random and all prompts from relative labels, then individual
// prompts from independent labels when enabled.
inline std::vector<PromptRecord> generate_prompts(const std::vector<CueLabel>& labels,
                                                  const std::string& mixture_id,
                                                  int target_index, std::uint64_t seed,
                                                  const TemplateTable& t,
                                                  const PromptOptions& opt = {}) {
  const auto rel = eligible_labels(labels, CueKind::relative, opt.filter_similar);
  auto out = generate_individual(rel, mixture_id, target_index, t, opt);
  Rng rng(derive_seed(seed, "prompt_random:" + mixture_id));
  if (auto r = generate_random(rel, mixture_id, target_index, rng, t, opt))
    out.push_back(std::move(*r));
  if (auto a = generate_all(rel, mixture_id, target_index, t, opt))
    out.push_back(std::move(*a));
  if (opt.independent_prompts) {
    const auto ind = eligible_labels(labels, CueKind::independent, false);
    auto more = generate_individual(ind, mixture_id, target_index, t, opt);
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

}  // namespace relcue
