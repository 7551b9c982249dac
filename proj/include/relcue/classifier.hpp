#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relcue/embeddings.hpp"
#include "relcue/error.hpp"
#include "relcue/rng.hpp"
#include "relcue/wave.hpp"

namespace relcue {

inline constexpr double kLayerNormEps = 1e-10;
inline constexpr double kBceEps = 1e-7;
inline constexpr double kCosineEps = 1e-12;

struct ClassifierConfig {
  double temperature = 0.2;
  double threshold = 0.5;
  void validate() const {
    if (!(temperature > 0.0 && temperature <= 1.0))
      throw ConfigError("classifier.temperature: must lie in (0, 1]");
    if (!(threshold > 0.0 && threshold < 1.0))
      throw ConfigError("classifier.threshold: must lie in (0, 1)");
  }
  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

inline double cosine_sim(const Embedding& a, const Embedding& b) {
  require(a.size() == b.size(), "cosine_sim: dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  require(aa > 0.0 && bb > 0.0, "cosine_sim: zero vector");
  return std::clamp(ab / std::max(std::sqrt(aa) * std::sqrt(bb), kCosineEps), -1.0, 1.0);
}

inline double logit(const Embedding& zp, const Embedding& z1, const Embedding& z2) {
  return cosine_sim(zp, z1) - cosine_sim(zp, z2);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double predict_prob(double logit_value, const ClassifierConfig& cfg = {}) {
  require(cfg.temperature > 0.0, "predict_prob: temperature must be positive");
  return sigmoid(logit_value / cfg.temperature);
}

inline int predict_label(double prob, const ClassifierConfig& cfg = {}) {
  return prob > cfg.threshold ? 1 : 0;
}

inline double bce_loss(double prob, int label) {
  const double p = std::clamp(prob, kBceEps, 1.0 - kBceEps);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

struct PitResult {
  bool swapped = false;            // estimate 1 matches reference 2
  std::array<double, 2> si_sdr{};  // per assigned pair
};

// Two-speaker PIT: the permutation with the higher mean SI-SDR. Ties keep
// the identity.
inline PitResult pit_assign(const std::pair<WaveBuffer, WaveBuffer>& est,
                            const std::pair<WaveBuffer, WaveBuffer>& ref) {
  const double a11 = si_sdr(est.first, ref.first);
  const double a22 = si_sdr(est.second, ref.second);
  const double a12 = si_sdr(est.first, ref.second);
  const double a21 = si_sdr(est.second, ref.first);
  if (a12 + a21 > a11 + a22) return {true, {a12, a21}};
  return {false, {a11, a22}};
}

// 1 iff the first estimate is closer to the reference; ties give 0.
inline int make_label(const WaveBuffer& s1, const WaveBuffer& s2, const WaveBuffer& ref) {
  return si_sdr(s1, ref) > si_sdr(s2, ref) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Projection head: z = gamma * standardize(ReLU(W t + b)) + beta.

struct ProjectionHead {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> W;  // out_dim x in_dim, row-major
  std::vector<double> b, gamma, beta;

  static ProjectionHead identity(std::size_t in, std::size_t out) {
    ProjectionHead h = zeros(in, out);
    for (std::size_t i = 0; i < std::min(in, out); ++i) h.W[i * in + i] = 1.0;
    return h;
  }

  static ProjectionHead random(std::size_t in, std::size_t out, std::uint64_t seed) {
    ProjectionHead h = zeros(in, out);
    Rng rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : h.W) w = s * rng.normal();
    return h;
  }

  std::size_t parameter_count() const { return W.size() + b.size() + gamma.size() + beta.size(); }

  void validate() const {
    require(in_dim > 0 && out_dim > 0, "projection head: zero dimension");
    require(W.size() == in_dim * out_dim && b.size() == out_dim && gamma.size() == out_dim &&
                beta.size() == out_dim,
            "projection head: parameter sizes inconsistent with dimensions");
    for (const auto* v : {&W, &b, &gamma, &beta})
      for (double x : *v) require(std::isfinite(x), "projection head: non-finite parameter");
  }

  friend bool operator==(const ProjectionHead&, const ProjectionHead&) = default;

 private:
  static ProjectionHead zeros(std::size_t in, std::size_t out) {
    require(in > 0 && out > 0, "projection head: zero dimension");
    return {in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0),
            std::vector<double>(out, 1.0), std::vector<double>(out, 0.0)};
  }
};

struct HeadTrace {
  std::vector<double> t, a, h, n, z;
  double inv_std = 1.0;
};

// Standardized activations before gamma/beta are kept in `n`.
inline HeadTrace head_forward(const ProjectionHead& head, const Embedding& t) {
  require(t.size() == head.in_dim, "projection head: input dimension " +
                                       std::to_string(t.size()) + ", expected " +
                                       std::to_string(head.in_dim));
  HeadTrace tr;
  tr.t = t;
  const std::size_t m = head.out_dim;
  tr.a.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = head.b[i];
    const double* row = head.W.data() + i * head.in_dim;
    for (std::size_t j = 0; j < head.in_dim; ++j) s += row[j] * t[j];
    tr.a[i] = s;
  }
  tr.h.resize(m);
  for (std::size_t i = 0; i < m; ++i) tr.h[i] = std::max(0.0, tr.a[i]);
  double mean = 0.0;
  for (double x : tr.h) mean += x;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double x : tr.h) var += (x - mean) * (x - mean);
  var /= static_cast<double>(m);
  tr.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  tr.n.resize(m);
  tr.z.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    tr.n[i] = (tr.h[i] - mean) * tr.inv_std;
    tr.z[i] = head.gamma[i] * tr.n[i] + head.beta[i];
  }
  return tr;
}

inline Embedding apply_head(const ProjectionHead& head, const Embedding& t) {
  return head_forward(head, t).z;
}

struct TrainingSample {
  Embedding text;  // raw prompt embedding
  Embedding z1, z2;
  int label = 0;  // 1 iff channel 1 is the target
};

struct HeadGradient {
  std::vector<double> W, b, gamma, beta;

  static HeadGradient zeros_like(const ProjectionHead& h) {
    return {std::vector<double>(h.W.size(), 0.0), std::vector<double>(h.b.size(), 0.0),
            std::vector<double>(h.gamma.size(), 0.0), std::vector<double>(h.beta.size(), 0.0)};
  }
};

namespace detail {

// d cos(z, e) / dz.
inline void add_cosine_grad(const std::vector<double>& z, const Embedding& e, double scale,
                            std::vector<double>& dz) {
  double ze = 0.0, zz = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    ze += z[i] * e[i];
    zz += z[i] * z[i];
    ee += e[i] * e[i];
  }
  require(zz > 0.0 && ee > 0.0, "cosine_sim: zero vector");
  const double nz = std::sqrt(zz), ne = std::sqrt(ee);
  const double c = ze / (nz * ne);
  for (std::size_t i = 0; i < z.size(); ++i)
    dz[i] += scale * (e[i] / (nz * ne) - c * z[i] / zz);
}

}  // namespace detail

// Mean BCE over the batch and its gradient with respect to every head
// parameter.
inline double head_loss_and_grad(const ProjectionHead& head,
                                 const std::vector<TrainingSample>& data,
                                 const std::vector<std::size_t>& batch,
                                 const ClassifierConfig& cfg, HeadGradient* grad) {
  require(!batch.empty(), "head_loss_and_grad: empty batch");
  if (grad) *grad = HeadGradient::zeros_like(head);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const std::size_t m = head.out_dim;
  double loss = 0.0;
  std::vector<double> dz(m), dn(m), da(m);
  for (std::size_t idx : batch) {
    const TrainingSample& s = data.at(idx);
    require(s.z1.size() == m && s.z2.size() == m,
            "train_projection: audio embedding dimension does not match head output");
    const HeadTrace tr = head_forward(head, s.text);
    const double lg = cosine_sim(tr.z, s.z1) - cosine_sim(tr.z, s.z2);
    const double p = predict_prob(lg, cfg);
    loss += bce_loss(p, s.label) * inv_b;
    if (!grad) continue;

    const double dlogit = (p - static_cast<double>(s.label)) / cfg.temperature * inv_b;
    std::fill(dz.begin(), dz.end(), 0.0);
    detail::add_cosine_grad(tr.z, s.z1, dlogit, dz);
    detail::add_cosine_grad(tr.z, s.z2, -dlogit, dz);
    double mean_dn = 0.0, mean_dn_n = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      grad->gamma[i] += dz[i] * tr.n[i];
      grad->beta[i] += dz[i];
      dn[i] = dz[i] * head.gamma[i];
      mean_dn += dn[i];
      mean_dn_n += dn[i] * tr.n[i];
    }
    mean_dn /= static_cast<double>(m);
    mean_dn_n /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double dh = tr.inv_std * (dn[i] - mean_dn - tr.n[i] * mean_dn_n);
      da[i] = tr.a[i] > 0.0 ? dh : 0.0;
      grad->b[i] += da[i];
      if (da[i] == 0.0) continue;
      double* row = grad->W.data() + i * head.in_dim;
      for (std::size_t j = 0; j < head.in_dim; ++j) row[j] += da[i] * tr.t[j];
    }
  }
  return loss;
}

struct TrainingSchedule {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t plateau_patience = 3;
  double plateau_factor = 0.5;
  std::uint64_t seed = 0;
  void validate() const {
    if (batch_size == 0) throw ConfigError("training.batch_size: must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate: must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("training.momentum: must lie in [0, 1)");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
      throw ConfigError("training.plateau_factor: must lie in (0, 1)");
  }
  friend bool operator==(const TrainingSchedule&, const TrainingSchedule&) = default;
};

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainingResult {
  ProjectionHead head;
  std::vector<LossPoint> trace;  // one point per mini-batch step
  std::vector<double> epoch_loss;
};

inline double dataset_loss(const ProjectionHead& head, const std::vector<TrainingSample>& data,
                           const ClassifierConfig& cfg) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return head_loss_and_grad(head, data, all, cfg, nullptr);
}

inline double dataset_accuracy(const ProjectionHead& head,
                               const std::vector<TrainingSample>& data,
                               const ClassifierConfig& cfg) {
  require(!data.empty(), "dataset_accuracy: empty dataset");
  std::size_t ok = 0;
  for (const auto& s : data) {
    const Embedding zp = apply_head(head, s.text);
    ok += predict_label(predict_prob(logit(zp, s.z1, s.z2), cfg), cfg) == s.label;
  }
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

// Mini-batch gradient descent with momentum; the learning rate is halved
// after `plateau_patience` epochs without improvement of the epoch loss.
inline TrainingResult train_projection(const std::vector<TrainingSample>& data,
                                       ProjectionHead head, const ClassifierConfig& cfg,
                                       const TrainingSchedule& sched) {
  cfg.validate();
  sched.validate();
  head.validate();
  require(!data.empty(), "train_projection: empty dataset");
  for (const auto& s : data)
    require(s.text.size() == head.in_dim && s.z1.size() == head.out_dim &&
                s.z2.size() == head.out_dim,
            "train_projection: embedding dimension mismatch");

  TrainingResult res;
  HeadGradient vel = HeadGradient::zeros_like(head);
  HeadGradient g;
  double lr = sched.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t step = 0;
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < sched.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(sched.seed, "train_shuffle", e));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(i))]);
    for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
      const std::vector<std::size_t> batch(
          order.begin() + static_cast<long>(start),
          order.begin() + static_cast<long>(std::min(order.size(), start + sched.batch_size)));
      const double loss = head_loss_and_grad(head, data, batch, cfg, &g);
      auto update = [&](std::vector<double>& p, std::vector<double>& v,
                        const std::vector<double>& d) {
        for (std::size_t k = 0; k < p.size(); ++k) {
          v[k] = sched.momentum * v[k] - lr * d[k];
          p[k] += v[k];
        }
      };
      update(head.W, vel.W, g.W);
      update(head.b, vel.b, g.b);
      update(head.gamma, vel.gamma, g.gamma);
      update(head.beta, vel.beta, g.beta);
      res.trace.push_back({step++, loss, lr});
    }
    const double epoch_loss = dataset_loss(head, data, cfg);
    res.epoch_loss.push_back(epoch_loss);
    if (epoch_loss < best - 1e-12) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= sched.plateau_patience) {
      lr *= sched.plateau_factor;
      stale = 0;
    }
  }
  res.head = std::move(head);
  return res;
}

inline std::string loss_trace_csv(const std::vector<LossPoint>& trace) {
  std::string out = "step,loss,lr\n";
  char buf[96];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", p.step, p.loss, p.lr);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint: "HEAD", u32 in_dim, u32 out_dim, then W, b, gamma, beta as
// float32.

inline void save_head(const ProjectionHead& h, const std::filesystem::path& path) {
  h.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write head checkpoint " + path.string());
  const auto in = static_cast<std::uint32_t>(h.in_dim);
  const auto od = static_cast<std::uint32_t>(h.out_dim);
  out.write("HEAD", 4);
  out.write(reinterpret_cast<const char*>(&in), 4);
  out.write(reinterpret_cast<const char*>(&od), 4);
  for (const auto* v : {&h.W, &h.b, &h.gamma, &h.beta})
    for (double x : *v) {
      const auto f = static_cast<float>(x);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
}

inline ProjectionHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open head checkpoint " + path.string());
  char magic[4];
  std::uint32_t id = 0, od = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&id), 4);
  in.read(reinterpret_cast<char*>(&od), 4);
  if (!in || std::memcmp(magic, "HEAD", 4) != 0)
    throw Error("head checkpoint " + path.string() + ": bad header");
  ProjectionHead h = ProjectionHead::identity(id, od);
  for (auto* v : {&h.W, &h.b, &h.gamma, &h.beta})
    for (double& x : *v) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      x = f;
    }
  if (!in) throw Error("head checkpoint " + path.string() + ": truncated");
  h.validate();
  return h;
}

// ---------------------------------------------------------------------------
// Inference.

struct Classification {
  int pred_index = 1;  // separated channel chosen, 1 or 2
  double prob = 0.5;   // P(channel 1 is the target)
  double sim1 = 0.0, sim2 = 0.0;
};

inline Classification classify_embeddings(const Embedding& text_raw, const Embedding& z1,
                                          const Embedding& z2, const ProjectionHead& head,
                                          const ClassifierConfig& cfg = {}) {
  const Embedding zp = apply_head(head, text_raw);
  Classification c;
  c.sim1 = cosine_sim(zp, z1);
  c.sim2 = cosine_sim(zp, z2);
  c.prob = predict_prob(c.sim1 - c.sim2, cfg);
  c.pred_index = predict_label(c.prob, cfg) == 1 ? 1 : 2;
  return c;
}

}  // namespace relcue
