#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "relcue/cues.hpp"
#include "relcue/rng.hpp"

using namespace relcue;

TEST(Thresholds, Defaults) {
  const ThresholdTable t = ThresholdTable::defaults();
  EXPECT_EQ(t.at(Attribute::rms_energy).theta, 3.0);
  EXPECT_EQ(t.at(Attribute::distance).theta, 0.5);
  EXPECT_EQ(t.at(Attribute::age).theta, 10.0);
  EXPECT_EQ(t.at(Attribute::mean_f0).theta, 6.0);
  EXPECT_EQ(t.at(Attribute::f0_span).theta, 25.0);
  EXPECT_EQ(t.at(Attribute::speaking_rate).theta, 15.0);
  EXPECT_EQ(t.at(Attribute::speaking_duration).theta, 15.0);
  EXPECT_EQ(t.at(Attribute::appearance_time).theta, 0.1);
  EXPECT_EQ(t.at(Attribute::mean_f0).mode, DiffMode::percent);
  EXPECT_EQ(t.at(Attribute::rms_energy).mode, DiffMode::direct);
  EXPECT_EQ(t.entries().size(), 8u);
}

TEST(Thresholds, RejectMissingOrNonPositive) {
  EXPECT_THROW(ThresholdTable({{Attribute::age, {DiffMode::direct, 10.0}}}), Error);
  auto e = ThresholdTable::defaults().entries();
  e[Attribute::age].theta = 0.0;
  EXPECT_THROW(
      {
        const ThresholdTable bad(e);
        (void)bad;
      },
      Error);
}

TEST(PercentDiff, RelativeToSmallerValue) {
  EXPECT_NEAR(percent_diff(200.0, 180.0), 11.11111111111111, 1e-12);
  EXPECT_NEAR(percent_diff(180.0, 200.0), -11.11111111111111, 1e-12);
  EXPECT_NEAR(percent_diff(1.0, 3.0), -200.0, 1e-12);
  EXPECT_THROW(percent_diff(0.0, 3.0), Error);
}

TEST(RelativeCategory, ThreeWay) {
  const auto t = ThresholdTable::defaults();
  EXPECT_EQ(relative_category(Attribute::age, 45.0, 30.0, t).category, "older");
  EXPECT_EQ(relative_category(Attribute::age, 30.0, 45.0, t).category, "younger");
  EXPECT_EQ(relative_category(Attribute::age, 35.0, 30.0, t).category, kSimilar);
  EXPECT_EQ(relative_category(Attribute::distance, 1.5, 0.5, t).category, "farther");
  EXPECT_EQ(relative_category(Attribute::mean_f0, 200.0, 180.0, t).category, "higher");
  EXPECT_EQ(relative_category(Attribute::appearance_time, 0.0, 1.0, t).category, "earlier");
}

TEST(RelativeCategory, BoundaryIsSimilar) {
  const auto t = ThresholdTable::defaults();
  EXPECT_EQ(relative_category(Attribute::age, 40.0, 30.0, t).category, kSimilar);
  EXPECT_EQ(relative_category(Attribute::age, 30.0, 40.0, t).category, kSimilar);
  EXPECT_EQ(relative_category(Attribute::rms_energy, -20.0, -23.0, t).category, kSimilar);
  EXPECT_EQ(relative_category(Attribute::mean_f0, 106.0, 100.0, t).category, kSimilar);
}

TEST(RelativeCategory, SwapIsAntisymmetric) {
  const auto t = ThresholdTable::defaults();
  Rng rng(21);
  for (int i = 0; i < 2000; ++i) {
    for (Attribute a : kContinuousAttributes) {
      const double x = rng.uniform(0.1, 100.0), y = rng.uniform(0.1, 100.0);
      const CueLabel ab = relative_category(a, x, y, t);
      const CueLabel ba = relative_category(a, y, x, t);
      const RelativeNames n = relative_names(a);
      if (ab.category == kSimilar)
        EXPECT_EQ(ba.category, kSimilar);
      else if (ab.category == n.above)
        EXPECT_EQ(ba.category, n.below);
      else
        EXPECT_EQ(ba.category, n.above);
      EXPECT_DOUBLE_EQ(*ab.delta, -*ba.delta);
    }
  }
}

TEST(DiscreteRelative, SameOrTargetCategory) {
  EXPECT_EQ(discrete_relative(Attribute::gender, "male", "male").category, kSame);
  EXPECT_EQ(discrete_relative(Attribute::gender, "female", "male").category, "female");
  EXPECT_FALSE(discrete_relative(Attribute::language, "English", "English").discriminative());
  EXPECT_TRUE(discrete_relative(Attribute::language, "French", "English").discriminative());
}

TEST(Quantizer, EqualFrequencyBins) {
  std::vector<double> v;
  for (int i = 1; i <= 9; ++i) v.push_back(i);
  const auto q = fit_independent_quantizer(Attribute::mean_f0, v, 3, {"low", "normal", "high"});
  ASSERT_EQ(q.breakpoints.size(), 2u);
  EXPECT_DOUBLE_EQ(q.breakpoints[0], 3.5);
  EXPECT_DOUBLE_EQ(q.breakpoints[1], 6.5);
  EXPECT_EQ(independent_quantize(q, 1.0).category, "low");
  EXPECT_EQ(independent_quantize(q, 5.0).category, "normal");
  EXPECT_EQ(independent_quantize(q, 9.0).category, "high");
  // a value on a breakpoint goes up
  EXPECT_EQ(q.bin(3.5), 1u);
  EXPECT_EQ(independent_quantize(q, 5.0).kind, CueKind::independent);
}

TEST(Quantizer, RejectsDegenerateInput) {
  EXPECT_THROW(fit_independent_quantizer(Attribute::distance, {1.0, 1.0, 1.0}, 2, {"near", "far"}),
               Error);
  EXPECT_THROW(fit_independent_quantizer(Attribute::distance, {1.0, 2.0}, 4, {"a", "b", "c", "d"}),
               Error);
}

TEST(CueLabelsForPair, SkipsMissingAttributes) {
  AttributeVector a, b;
  a.mean_f0_hz = 210.0;
  b.mean_f0_hz = 120.0;
  a.age_years = 30.0;  // b has no age
  a.speaking_duration_s = 3.0;
  b.speaking_duration_s = 2.0;
  a.rms_energy_db = -20.0;
  b.rms_energy_db = -30.0;
  a.gender = Gender::female;
  b.gender = Gender::male;
  a.emotion = "happy";
  const auto labels = cue_labels_for_pair(a, b, ThresholdTable::defaults());
  bool saw_age = false, saw_emotion = false, saw_f0 = false;
  for (const auto& l : labels) {
    saw_age |= l.attribute == Attribute::age;
    saw_emotion |= l.attribute == Attribute::emotion;
    if (l.attribute == Attribute::mean_f0) {
      saw_f0 = true;
      EXPECT_EQ(l.category, "higher");
    }
    if (l.attribute == Attribute::gender) {
      EXPECT_EQ(l.category, "female");
    }
    if (l.attribute == Attribute::rms_energy) {
      EXPECT_EQ(l.category, "louder");
    }
  }
  EXPECT_FALSE(saw_age);
  EXPECT_FALSE(saw_emotion);
  EXPECT_TRUE(saw_f0);
}

TEST(CueLabelsForPair, IndependentLabelsFollowRelative) {
  AttributeVector a, b;
  a.distance_m = 0.4;
  b.distance_m = 1.2;
  QuantizerSet qs;
  qs[Attribute::distance] =
      fit_independent_quantizer(Attribute::distance, {0.3, 0.5, 0.9, 1.4}, 2, {"near", "far"});
  const auto labels = cue_labels_for_pair(a, b, ThresholdTable::defaults(), qs);
  ASSERT_FALSE(labels.empty());
  EXPECT_EQ(labels.back().kind, CueKind::independent);
  EXPECT_EQ(labels.back().category, "near");
  EXPECT_EQ(labels.back().source, CueSource::target);
}
