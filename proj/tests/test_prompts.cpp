#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "relcue/prompts.hpp"

using namespace relcue;

namespace {

CueLabel rel(Attribute a, const std::string& cat) { return {a, CueKind::relative, cat, 1.0}; }

std::vector<CueLabel> sample_labels() {
  return {rel(Attribute::mean_f0, "higher"),       rel(Attribute::age, kSimilar),
          rel(Attribute::rms_energy, "louder"),    rel(Attribute::distance, "nearer"),
          rel(Attribute::speaking_rate, "faster"), {Attribute::gender, CueKind::relative, "female"},
          {Attribute::language, CueKind::relative, kSame},
          {Attribute::distance, CueKind::independent, "near", std::nullopt, CueSource::target}};
}

}  // namespace

TEST(Templates, PhraseLookupWithWildcard) {
  const TemplateTable t = TemplateTable::defaults();
  EXPECT_EQ(t.phrase(Attribute::mean_f0, "higher"), "a higher pitch");
  EXPECT_EQ(t.phrase(Attribute::distance, "nearer"), "a position nearer to the microphone");
  EXPECT_EQ(t.phrase(Attribute::transcription, "hello world"), "the words \"hello world\"");
  EXPECT_EQ(t.phrase(Attribute::gender, kSame), "the same gender");
  EXPECT_THROW(t.phrase(Attribute::age, "ancient"), Error);
}

TEST(Templates, ParseErrorsNameLine) {
  try {
    TemplateTable::parse("age\tolder\tan older age\nbroken line\n", "t.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("t.tsv:2"), std::string::npos);
  }
}

TEST(Compose, GenderBecomesSubject) {
  const TemplateTable t = TemplateTable::defaults();
  EXPECT_EQ(compose_prompt({rel(Attribute::mean_f0, "higher")}, "extract", t),
            "Please extract the speaker with a higher pitch.");
  EXPECT_EQ(compose_prompt({{Attribute::gender, CueKind::relative, "male"},
                            rel(Attribute::age, "older"), rel(Attribute::rms_energy, "louder"),
                            rel(Attribute::distance, "farther")},
                           "isolate", t),
            "Please isolate the male speaker with an older age, a louder voice and a position "
            "farther from the microphone.");
}

TEST(Generate, FilterSimilarDropsNonDiscriminative) {
  const TemplateTable t = TemplateTable::defaults();
  PromptOptions opt;
  opt.filter_similar = true;
  const auto prompts = generate_prompts(sample_labels(), "m1", 2, 9, t, opt);
  for (const auto& p : prompts) {
    EXPECT_EQ(p.target_index, 2);
    for (const auto& c : p.cues) EXPECT_TRUE(c.discriminative()) << p.text;
  }
}

TEST(Generate, ConfigurationsAndCounts) {
  const TemplateTable t = TemplateTable::defaults();
  PromptOptions opt;
  opt.filter_similar = false;
  const auto prompts = generate_prompts(sample_labels(), "m2", 1, 9, t, opt);
  std::size_t individual_rel = 0, individual_ind = 0, random = 0, all = 0;
  for (const auto& p : prompts) {
    if (p.config == PromptConfig::individual)
      (p.kind() == CueKind::relative ? individual_rel : individual_ind)++;
    if (p.config == PromptConfig::random) {
      ++random;
      EXPECT_GE(p.cues.size(), 2u);
      EXPECT_LE(p.cues.size(), 6u);
    }
    if (p.config == PromptConfig::all) {
      ++all;
      EXPECT_EQ(p.cues.size(), 7u);
    }
  }
  EXPECT_EQ(individual_rel, 7u);
  EXPECT_EQ(individual_ind, 1u);
  EXPECT_EQ(random, 1u);
  EXPECT_EQ(all, 1u);
}

TEST(Generate, RandomNeedsFourLabels) {
  const TemplateTable t = TemplateTable::defaults();
  Rng rng(1);
  const std::vector<CueLabel> three{rel(Attribute::mean_f0, "higher"), rel(Attribute::age, "older"),
                                    rel(Attribute::distance, "nearer")};
  EXPECT_FALSE(generate_random(three, "m", 1, rng, t).has_value());
  EXPECT_TRUE(generate_all(three, "m", 1, t).has_value());
  EXPECT_FALSE(generate_all({three[0]}, "m", 1, t).has_value());
}

TEST(Generate, RandomSubsetSizesCoverRange) {
  const TemplateTable t = TemplateTable::defaults();
  std::vector<CueLabel> five;
  for (Attribute a : {Attribute::mean_f0, Attribute::age, Attribute::distance,
                      Attribute::rms_energy, Attribute::speaking_rate})
    five.push_back(rel(a, relative_names(a).above));
  std::set<std::size_t> sizes;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(s);
    const auto p = generate_random(five, "m", 1, rng, t);
    ASSERT_TRUE(p.has_value());
    sizes.insert(p->cues.size());
    const auto types = p->cue_types();
    EXPECT_EQ(std::set<Attribute>(types.begin(), types.end()).size(), p->cues.size());
  }
  EXPECT_EQ(sizes, (std::set<std::size_t>{2, 3, 4}));
}

TEST(Generate, Deterministic) {
  const TemplateTable t = TemplateTable::defaults();
  EXPECT_EQ(generate_prompts(sample_labels(), "m3", 1, 5, t),
            generate_prompts(sample_labels(), "m3", 1, 5, t));
}

TEST(Verbs, ChosenFromList) {
  PromptOptions opt;
  std::set<std::string> seen;
  for (int i = 0; i < 60; ++i) seen.insert(choose_verb(opt, "m" + std::to_string(i), "k"));
  EXPECT_EQ(seen, (std::set<std::string>{"extract", "separate", "isolate"}));
  opt.verbs.clear();
  EXPECT_THROW(choose_verb(opt, "m", "k"), Error);
}
