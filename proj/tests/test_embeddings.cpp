#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "relcue/classifier.hpp"
#include "relcue/embeddings.hpp"

using namespace relcue;

namespace {

AttributeVector voice(double f0, double dist) {
  AttributeVector a;
  a.mean_f0_hz = f0;
  a.f0_span_hz = 60.0;
  a.age_years = 40.0;
  a.speaking_duration_s = 3.0;
  a.speaking_rate_spm = 250.0;
  a.rms_energy_db = -28.0;
  a.distance_m = dist;
  a.appearance_time_s = 0.5;
  return a;
}

std::filesystem::path tmp(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(Store, RoundTrip) {
  EmbeddingStore s(3);
  s.insert("a", {1.0, 2.0, 3.0});
  s.insert("m/1", {0.5, -0.25, 0.125});
  save_store(s, tmp("relcue_store.bin"));
  const EmbeddingStore r = load_store(tmp("relcue_store.bin"));
  EXPECT_EQ(r.dim(), 3u);
  EXPECT_EQ(r.get("m/1"), (Embedding{0.5, -0.25, 0.125}));
  EXPECT_THROW(r.get("missing"), Error);
  std::filesystem::remove(tmp("relcue_store.bin"));
}

TEST(Store, RejectsBadInput) {
  EmbeddingStore s(2);
  EXPECT_THROW(s.insert("a", {1.0}), Error);
  s.insert("a", {1.0, 2.0});
  EXPECT_THROW(s.insert("a", {1.0, 2.0}), Error);
  save_store(s, tmp("relcue_store_bad.bin"));
  std::filesystem::resize_file(tmp("relcue_store_bad.bin"),
                               std::filesystem::file_size(tmp("relcue_store_bad.bin")) - 2);
  EXPECT_THROW(load_store(tmp("relcue_store_bad.bin")), Error);
  std::ofstream(tmp("relcue_store_bad.bin")) << "nope";
  EXPECT_THROW(load_store(tmp("relcue_store_bad.bin")), Error);
  std::filesystem::remove(tmp("relcue_store_bad.bin"));
}

TEST(FileProvider, LooksUpKeys) {
  EmbeddingStore audio(2), text(4);
  audio.insert(audio_key("mix", 1), {1.0, 0.0});
  text.insert("Please extract the speaker.", {0.0, 1.0, 0.0, 0.0});
  const FileProvider p(audio, text);
  EXPECT_EQ(p.dim(), 2u);
  EXPECT_EQ(p.text_dim(), 4u);
  EXPECT_EQ(p.embed_audio({"mix/1"}), (Embedding{1.0, 0.0}));
  EXPECT_THROW(p.embed_audio({"mix/2"}), Error);
  EXPECT_EQ(p.embed_text({"Please extract the speaker."}).size(), 4u);
}

TEST(Oracle, SemanticBlocksHaveUnitNorm) {
  AttributeVector a = voice(150.0, 1.0);
  a.speaking_rate_spm.reset();
  const auto u = oracle_semantic(a);
  EXPECT_EQ(u.size(), OracleLayout::kSemanticDim);
  const double n2 = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
  EXPECT_NEAR(n2, 12.0, 1e-9);
}

TEST(Oracle, AudioIsLayerNormalized) {
  const OracleProvider p({0.3, 4});
  const AttributeVector a = voice(150.0, 1.0), b = voice(210.0, 0.5);
  const Embedding z = p.embed_audio({"m/1", &a, &b, 15.0});
  ASSERT_EQ(z.size(), OracleLayout::kDim);
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  double var = 0.0;
  for (double x : z) var += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var / z.size(), 1.0, 1e-6);
  EXPECT_EQ(z, p.embed_audio({"m/1", &a, &b, 15.0}));
  EXPECT_NE(z, p.embed_audio({"m/2", &a, &b, 15.0}));
}

TEST(Oracle, ZeroNoiseRelativeCuePicksMatchingChannel) {
  const OracleProvider p;
  const ProjectionHead head = ProjectionHead::identity(p.dim(), p.dim());
  const AttributeVector hi = voice(220.0, 0.4), lo = voice(200.0, 1.2);
  const Embedding z_hi = p.embed_audio({"m/1", &hi}), z_lo = p.embed_audio({"m/2", &lo});
  for (const auto& [cat, attr, want_hi] :
       std::vector<std::tuple<std::string, Attribute, bool>>{{"higher", Attribute::mean_f0, true},
                                                             {"lower", Attribute::mean_f0, false},
                                                             {"nearer", Attribute::distance, true},
                                                             {"farther", Attribute::distance, false}}) {
    PromptRecord pr{"p", PromptConfig::individual, {{attr, CueKind::relative, cat, 1.0}}, 1};
    const Embedding t = p.embed_text({cat, &pr});
    const Classification c = classify_embeddings(t, z_hi, z_lo, head);
    EXPECT_EQ(c.pred_index, want_hi ? 1 : 2) << cat;
    const Classification s = classify_embeddings(t, z_lo, z_hi, head);
    EXPECT_EQ(s.pred_index, want_hi ? 2 : 1) << cat;
  }
}

TEST(Oracle, CueDirectionsAreUnit) {
  for (const CueLabel& l : std::vector<CueLabel>{
           {Attribute::age, CueKind::relative, "older"},
           {Attribute::age, CueKind::relative, kSimilar},
           {Attribute::language, CueKind::relative, kSame},
           {Attribute::language, CueKind::relative, "French"},
           {Attribute::mean_f0, CueKind::independent, "high", std::nullopt, CueSource::target}}) {
    const auto d = oracle_cue_direction(l);
    EXPECT_NEAR(std::inner_product(d.begin(), d.end(), d.begin(), 0.0), 1.0, 1e-12);
  }
  EXPECT_THROW(oracle_cue_direction({Attribute::age, CueKind::relative, "ancient"}), Error);
}

TEST(Oracle, MissingMetadataIsAnError) {
  const OracleProvider p;
  EXPECT_THROW(p.embed_audio({"m/1"}), Error);
  EXPECT_THROW(p.embed_text({"text only"}), Error);
  EXPECT_THROW(OracleProvider({-1.0, 0}), Error);
}

TEST(Oracle, GenderBlockSimilarity) {
  AttributeVector f, m;
  f.gender = Gender::female;
  m.gender = Gender::male;
  const CueLabel cue{Attribute::gender, CueKind::relative, "female"};
  const auto d = oracle_cue_direction(cue);
  const std::size_t off = OracleLayout::offset(Attribute::gender);
  auto block_cos = [&](const std::vector<double>& u) {
    double dot = 0.0, nu = 0.0, nd = 0.0;
    for (std::size_t i = off; i < off + OracleLayout::kGenderDim; ++i) {
      dot += u[i] * d[i];
      nu += u[i] * u[i];
      nd += d[i] * d[i];
    }
    return dot / std::sqrt(nu * nd);
  };
  EXPECT_NEAR(block_cos(oracle_semantic(f)), 1.0, 1e-12);
  EXPECT_NEAR(block_cos(oracle_semantic(m)), 0.0, 1e-12);
}

TEST(Oracle, SimilarityGapShrinksWithNoise) {
  AttributeVector f = voice(210.0, 1.0), m = voice(120.0, 1.0);
  f.gender = Gender::female;
  m.gender = Gender::male;
  const PromptRecord pr{
      "p", PromptConfig::individual, {{Attribute::gender, CueKind::relative, "female"}}, 1};
  double previous = 2.0;
  for (double sigma : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    double gap = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const OracleProvider p({sigma, seed});
      const Embedding t = p.embed_text({"p", &pr});
      gap += cosine_sim(t, p.embed_audio({"m/1", &f})) - cosine_sim(t, p.embed_audio({"m/2", &m}));
    }
    gap /= 1000.0;
    EXPECT_LT(gap, previous) << sigma;
    EXPECT_GT(gap, 0.0) << sigma;
    previous = gap;
  }
}

TEST(Oracle, NoiseNormIsRelativeToSignal) {
  const PromptRecord pr{
      "p", PromptConfig::individual, {{Attribute::age, CueKind::relative, "older", 12.0}}, 1};
  const Embedding clean = OracleProvider().embed_text({"p", &pr});
  double ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const Embedding noisy = OracleProvider({0.5, seed}).embed_text({"p", &pr});
    double dn = 0.0, cn = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      dn += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
      cn += clean[i] * clean[i];
    }
    ratio += std::sqrt(dn / cn);
  }
  EXPECT_NEAR(ratio / 400.0, 0.5, 0.02);
}

TEST(Oracle, TextNoiseDependsOnContext) {
  const PromptRecord pr{
      "p", PromptConfig::individual, {{Attribute::age, CueKind::relative, "older", 12.0}}, 1};
  const OracleProvider p({0.5, 3});
  EXPECT_EQ(p.embed_text({"p", &pr, "m1"}), p.embed_text({"p", &pr, "m1"}));
  EXPECT_NE(p.embed_text({"p", &pr, "m1"}), p.embed_text({"p", &pr, "m2"}));
  EXPECT_EQ(OracleProvider().embed_text({"p", &pr, "m1"}),
            OracleProvider().embed_text({"p", &pr, "m2"}));
}

TEST(OracleScales, MedianAndInterquartileRange) {
  std::vector<AttributeVector> v(5);
  const double ages[] = {20.0, 30.0, 40.0, 50.0, 60.0};
  for (std::size_t i = 0; i < 5; ++i) {
    v[i].age_years = ages[i];
    v[i].mean_f0_hz = 100.0 * std::pow(2.0, static_cast<double>(i));
  }
  std::vector<const AttributeVector*> ptrs;
  for (const auto& a : v) ptrs.push_back(&a);
  const OracleScales s = fit_oracle_scales(ptrs);
  ASSERT_TRUE(s.count(Attribute::age));
  EXPECT_DOUBLE_EQ(s.at(Attribute::age).center, 40.0);
  EXPECT_DOUBLE_EQ(s.at(Attribute::age).scale, 20.0);
  EXPECT_NEAR(s.at(Attribute::mean_f0).center, std::log(400.0), 1e-12);
  EXPECT_NEAR(s.at(Attribute::mean_f0).scale, 2.0 * std::log(2.0), 1e-12);
  EXPECT_FALSE(s.count(Attribute::distance));
  EXPECT_DOUBLE_EQ(oracle_angle(Attribute::age, 40.0, s), 0.0);
  EXPECT_LT(oracle_angle(Attribute::age, 30.0, s), 0.0);
}
