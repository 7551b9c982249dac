#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "relcue/classifier.hpp"

using namespace relcue;

namespace {

Embedding randvec(Rng& rng, std::size_t n) {
  Embedding v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

WaveBuffer randwave(Rng& rng, std::size_t n) { return WaveBuffer(randvec(rng, n)); }

std::vector<TrainingSample> toy_data(std::size_t n, std::size_t in, std::size_t out,
                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingSample> d;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingSample s{randvec(rng, in), randvec(rng, out), randvec(rng, out), 0};
    // Channel 1 is the target when its first coordinate agrees with the text.
    s.label = (s.text[0] > 0) == (s.z1[0] > s.z2[0]) ? 1 : 0;
    d.push_back(std::move(s));
  }
  return d;
}

}  // namespace

TEST(Cosine, BasicsAndErrors) {
  EXPECT_DOUBLE_EQ(cosine_sim({1, 0}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_sim({2, 0}, {3, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_sim({1, 1}, {-1, -1}), -1.0);
  EXPECT_THROW(cosine_sim({0, 0}, {1, 0}), Error);
  EXPECT_THROW(cosine_sim({1, 0, 0}, {1, 0}), Error);
}

TEST(Probability, TemperatureAndThreshold) {
  EXPECT_DOUBLE_EQ(predict_prob(0.0), 0.5);
  EXPECT_NEAR(predict_prob(0.2), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(predict_label(0.5), 0);
  EXPECT_EQ(predict_label(0.5000001), 1);
  EXPECT_TRUE(std::isfinite(bce_loss(0.0, 1)));
  EXPECT_NEAR(bce_loss(0.0, 1), -std::log(kBceEps), 1e-9);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  ClassifierConfig bad;
  bad.temperature = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Pit, MatchesExhaustiveSearch) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const WaveBuffer r1 = randwave(rng, 64), r2 = randwave(rng, 64);
    const WaveBuffer e1 = randwave(rng, 64), e2 = randwave(rng, 64);
    const PitResult p = pit_assign({e1, e2}, {r1, r2});
    const double id = si_sdr(e1, r1) + si_sdr(e2, r2);
    const double sw = si_sdr(e1, r2) + si_sdr(e2, r1);
    EXPECT_EQ(p.swapped, sw > id);
  }
}

TEST(Pit, TieKeepsIdentityAndLabelTieIsZero) {
  const WaveBuffer r({1.0, 2.0, 3.0});
  EXPECT_FALSE(pit_assign({r, r}, {r, r}).swapped);
  EXPECT_EQ(make_label(r, r, r), 0);
  EXPECT_EQ(make_label(r, WaveBuffer({3.0, 1.0, 2.0}), r), 1);
}

TEST(Head, IdentityForwardIsLayerNormOfRelu) {
  const ProjectionHead h = ProjectionHead::identity(4, 4);
  const Embedding z = apply_head(h, {1.0, -2.0, 3.0, 0.0});
  // ReLU -> (1, 0, 3, 0); mean 1, variance 1.5
  const double s = std::sqrt(1.5 + kLayerNormEps);
  EXPECT_NEAR(z[0], 0.0, 1e-12);
  EXPECT_NEAR(z[1], -1.0 / s, 1e-9);
  EXPECT_NEAR(z[2], 2.0 / s, 1e-9);
  EXPECT_NEAR(z[3], -1.0 / s, 1e-9);
}

TEST(Head, AnalyticGradientMatchesFiniteDifferences) {
  const auto data = toy_data(24, 6, 5, 3);
  ProjectionHead h = ProjectionHead::random(6, 5, 17);
  Rng rng(4);
  for (double& g : h.gamma) g = 1.0 + 0.3 * rng.normal();
  for (double& b : h.beta) b = 0.1 * rng.normal();
  for (double& b : h.b) b = 0.2 * rng.normal();
  const ClassifierConfig cfg;
  std::vector<std::size_t> batch{0, 3, 5, 7, 8, 11, 19, 23};
  HeadGradient g;
  head_loss_and_grad(h, data, batch, cfg, &g);
  auto check = [&](std::vector<double>& param, const std::vector<double>& grad) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double keep = param[i], eps = 1e-6;
      param[i] = keep + eps;
      const double up = head_loss_and_grad(h, data, batch, cfg, nullptr);
      param[i] = keep - eps;
      const double dn = head_loss_and_grad(h, data, batch, cfg, nullptr);
      param[i] = keep;
      EXPECT_NEAR(grad[i], (up - dn) / (2 * eps), 1e-6 + 1e-4 * std::abs(grad[i]));
    }
  };
  check(h.W, g.W);
  check(h.b, g.b);
  check(h.gamma, g.gamma);
  check(h.beta, g.beta);
}

TEST(Training, ReducesLossAndIsDeterministic) {
  const auto data = toy_data(256, 16, 32, 9);
  const ClassifierConfig cfg;
  TrainingSchedule sched;
  sched.epochs = 15;
  sched.seed = 2;
  const ProjectionHead init = ProjectionHead::random(16, 32, 5);
  const TrainingResult a = train_projection(data, init, cfg, sched);
  const TrainingResult b = train_projection(data, init, cfg, sched);
  EXPECT_EQ(a.head.W, b.head.W);
  EXPECT_LT(dataset_loss(a.head, data, cfg), dataset_loss(init, data, cfg));
  EXPECT_GT(dataset_accuracy(a.head, data, cfg), 0.8);
  EXPECT_EQ(a.trace.size(), 15u * 8u);
  EXPECT_EQ(loss_trace_csv(a.trace).substr(0, 13), "step,loss,lr\n");
}

TEST(Training, RejectsMismatchedDimensions) {
  auto data = toy_data(4, 6, 6, 9);
  data[2].z1.pop_back();
  EXPECT_THROW(train_projection(data, ProjectionHead::identity(6, 6), {}, {}), Error);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const ProjectionHead h = ProjectionHead::random(5, 3, 8);
  const auto path = std::filesystem::temp_directory_path() / "relcue_head.bin";
  save_head(h, path);
  const ProjectionHead r = load_head(path);
  EXPECT_EQ(r.in_dim, 5u);
  EXPECT_EQ(r.out_dim, 3u);
  for (std::size_t i = 0; i < h.W.size(); ++i)
    EXPECT_EQ(r.W[i], static_cast<double>(static_cast<float>(h.W[i])));
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(load_head(path), Error);
  std::filesystem::remove(path);
}

TEST(Classify, ProbabilityMatchesSimilarities) {
  Rng rng(30);
  const Embedding t = randvec(rng, 8), z1 = randvec(rng, 8), z2 = randvec(rng, 8);
  const ProjectionHead h = ProjectionHead::identity(8, 8);
  const Classification c = classify_embeddings(t, z1, z2, h);
  EXPECT_NEAR(c.prob, predict_prob(c.sim1 - c.sim2), 1e-15);
  EXPECT_EQ(c.pred_index, c.prob > 0.5 ? 1 : 2);
  const Classification s = classify_embeddings(t, z2, z1, h);
  EXPECT_NEAR(s.prob, 1.0 - c.prob, 1e-12);
}
