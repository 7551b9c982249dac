#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "relcue/relcue.hpp"

using namespace relcue;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

WaveBuffer noise(Rng& rng, std::size_t n, double amp = 0.1) {
  std::vector<double> x(n);
  for (double& v : x) v = amp * rng.normal();
  return WaveBuffer(std::move(x));
}

fs::path scratch() {
  static const fs::path p = [] {
    const fs::path d = fs::temp_directory_path() / "relcue_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

const Manifest& corpus() {
  static const Manifest m = [] {
    SynthCorpusSpec spec;
    spec.seed = 2024;
    return synthesize_corpus(scratch() / "corpus", spec);
  }();
  return m;
}

Outcome si_sdr_scale_invariance() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 256 + rng.index(1800);
    const WaveBuffer s = noise(rng, n, 1.0);
    std::vector<double> e(n);
    const double mix = rng.uniform(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) e[k] = mix * s[k] + rng.normal();
    const WaveBuffer est(e);
    const double base = si_sdr(est, s);
    for (double a : {-2.0, 0.1, 3.0}) {
      std::vector<double> scaled(e);
      for (double& v : scaled) v *= a;
      worst = std::max(worst, std::abs(si_sdr(WaveBuffer(scaled), s) - base));
    }
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-6 && dt < 5.0,
          "max |delta| " + fmt("%.3g dB", worst) + ", " + fmt("%.2f s", dt)};
}

Outcome pit_equivalence() {
  Rng rng(202);
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 32 + rng.index(200);
    const WaveBuffer r1 = noise(rng, n, 1.0), r2 = noise(rng, n, 1.0);
    std::vector<double> a(n), b(n);
    const double m = rng.uniform(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = m * r1[k] + (1 - m) * r2[k] + 0.3 * rng.normal();
      b[k] = (1 - m) * r1[k] + m * r2[k] + 0.3 * rng.normal();
    }
    const WaveBuffer e1(a), e2(b);
    const double identity = si_sdr(e1, r1) + si_sdr(e2, r2);
    const double swapped = si_sdr(e1, r2) + si_sdr(e2, r1);
    agree += pit_assign({e1, e2}, {r1, r2}).swapped == (swapped > identity);
  }
  return {agree == 1000, std::to_string(agree) + "/1000 agree"};
}

Outcome cue_antisymmetry() {
  const ThresholdTable t = ThresholdTable::defaults();
  Rng rng(303);
  std::size_t ok = 0, total = 0;
  for (int i = 0; i < 10000; ++i) {
    for (Attribute a : kContinuousAttributes) {
      const Threshold& th = t.at(a);
      const double scale = th.mode == DiffMode::percent ? 1.0 : 4.0 * th.theta;
      const double x = th.mode == DiffMode::percent ? rng.uniform(50.0, 400.0)
                                                    : rng.uniform(-scale, scale);
      const double y = th.mode == DiffMode::percent ? x * rng.uniform(0.6, 1.6)
                                                    : x + rng.uniform(-scale, scale);
      const CueLabel ab = relative_category(a, x, y, t), ba = relative_category(a, y, x, t);
      const RelativeNames n = relative_names(a);
      bool good = ab.category == kSimilar   ? ba.category == kSimilar
                  : ab.category == n.above ? ba.category == n.below
                                           : ab.category == n.below && ba.category == n.above;
      good = good && *ab.delta == -*ba.delta;
      ok += good;
      ++total;
    }
  }
  std::size_t boundary = 0, boundary_ok = 0;
  for (Attribute a : kContinuousAttributes) {
    const Threshold& th = t.at(a);
    for (int k = 1; k <= 400; ++k) {
      const double x = th.mode == DiffMode::percent ? 100.0 * k : 0.25 * k;
      const double y = th.mode == DiffMode::percent ? x * (1.0 + th.theta / 100.0) : x + th.theta;
      for (const auto& [p, q] : {std::pair{x, y}, std::pair{y, x}}) {
        if (std::abs(attribute_delta(th, p, q)) != th.theta) continue;
        ++boundary;
        boundary_ok += relative_category(a, p, q, t).category == kSimilar;
      }
    }
  }
  return {ok == total && boundary > 0 && boundary_ok == boundary,
          std::to_string(ok) + "/" + std::to_string(total) + " swaps, " +
              std::to_string(boundary_ok) + "/" + std::to_string(boundary) +
              " exact-boundary pairs similar"};
}

Outcome table_defaults() {
  const PipelineConfig c =
      load_config(fs::path(RELCUE_SOURCE_DIR) / "data" / "default_config.json");
  const std::vector<std::pair<Attribute, double>> expect{
      {Attribute::rms_energy, 3.0},         {Attribute::distance, 0.5},
      {Attribute::age, 10.0},               {Attribute::mean_f0, 6.0},
      {Attribute::f0_span, 25.0},           {Attribute::speaking_rate, 15.0},
      {Attribute::speaking_duration, 15.0}, {Attribute::appearance_time, 0.1}};
  std::string bad;
  for (const auto& [a, v] : expect)
    if (c.thresholds.at(a).theta != v) bad += std::string(attribute_id(a)) + " ";
  const bool modes = c.thresholds.at(Attribute::mean_f0).mode == DiffMode::percent &&
                     c.thresholds.at(Attribute::rms_energy).mode == DiffMode::direct &&
                     c.thresholds.at(Attribute::speaking_rate).mode == DiffMode::percent &&
                     c.thresholds.at(Attribute::age).mode == DiffMode::direct;
  return {bad.empty() && modes && c.thresholds.entries().size() == 8,
          bad.empty() ? "8 thresholds match" : "mismatch: " + bad};
}

Outcome mixture_rules() {
  const auto t0 = Clock::now();
  const PipelineConfig cfg;
  Rng rng(505);
  const std::size_t fs = kSampleRate;
  long worst_overlap = 0;
  double worst_sir = 0.0;
  bool sir_in_range = true;
  for (std::size_t k = 0; k < 1000; ++k) {
    const std::size_t n1 = 3 * fs + rng.index(3 * fs + 1), n2 = 3 * fs + rng.index(3 * fs + 1);
    MixturePlan p = sample_plan(cfg.seed, "acceptance", k, n1, n2, cfg.mixer, cfg.room);
    sir_in_range = sir_in_range && cfg.mixer.sir_db.contains(p.sir_db);
    const RenderedMixture r = render_mixture(p, noise(rng, n1), noise(rng, n2),
                                             make_rir(p.room, p.placement1, cfg),
                                             make_rir(p.room, p.placement2, cfg), cfg.mixer.peak);
    const auto realized =
        static_cast<long>(interval_overlap(p.overlap.offset1, n1, p.overlap.offset2, n2));
    const long expected = static_cast<long>(n1 + n2) - static_cast<long>(6 * fs);
    worst_overlap = std::max(worst_overlap, std::abs(realized - expected));
    worst_sir = std::max(worst_sir, std::abs(measured_sir_db(r.rev1, r.rev2) - p.sir_db));
  }
  const double dt = seconds_since(t0);
  return {worst_overlap <= 1 && worst_sir <= 0.1 && sir_in_range && dt < 120.0,
          "max overlap error " + std::to_string(worst_overlap) + " samples, max SIR error " +
              fmt("%.3g dB", worst_sir) + ", " + fmt("%.1f s", dt)};
}

Outcome rir_fidelity() {
  const PipelineConfig cfg;
  Rng rng(606);
  double worst_t60 = 0.0, worst_delay = 0.0;
  std::size_t rooms = 0;
  for (double t60 : {0.3, 0.45, 0.6}) {
    for (int i = 0; i < 100; ++i) {
      RoomSpec room = sample_room(rng, cfg.room);
      room.rt60_s = t60;
      const SourcePlacement p = sample_placement(rng, room, cfg.room);
      const Rir rir = make_rir(room, p, cfg);
      const double est = schroeder_t20(rir.taps, kSampleRate);
      worst_t60 = std::max(worst_t60, std::abs(est - t60) / t60);
      std::size_t peak = 0;
      for (std::size_t k = 0; k < rir.taps.size(); ++k)
        if (std::abs(rir.taps[k]) > std::abs(rir.taps[peak])) peak = k;
      const double expected = source_mic_distance(room, p) / 343.0 * kSampleRate;
      worst_delay = std::max(worst_delay, std::abs(static_cast<double>(peak) - expected));
      ++rooms;
    }
  }
  return {worst_t60 <= 0.2 && worst_delay <= 1.0,
          std::to_string(rooms) + " rooms, max T60 error " + fmt("%.1f%%", 100 * worst_t60) +
              ", max direct-path error " + fmt("%.2f samples", worst_delay)};
}

Outcome pitch_tracker() {
  double worst = 0.0;
  bool voiced_all = true;
  for (double f : {100.0, 150.0, 220.0, 330.0, 400.0}) {
    std::vector<double> x(kSampleRate);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / kSampleRate);
    const auto m = mean_f0(estimate_f0_track(WaveBuffer(std::move(x))));
    if (!m) {
      voiced_all = false;
      continue;
    }
    worst = std::max(worst, std::abs(*m - f) / f);
  }
  std::size_t voiced_silence = 0;
  for (const auto& fr : estimate_f0_track(WaveBuffer(std::vector<double>(kSampleRate, 0.0))))
    voiced_silence += fr.f0_hz.has_value();
  return {voiced_all && worst < 0.01 && voiced_silence == 0,
          "max error " + fmt("%.3f%%", 100 * worst) + ", voiced frames in silence " +
              std::to_string(voiced_silence)};
}

Outcome syllable_fixture() {
  std::ifstream in(fs::path(RELCUE_SOURCE_DIR) / "tests" / "fixtures" / "syllables" / "counts.tsv");
  if (!in) return {false, "fixture missing"};
  std::string line;
  std::size_t n = 0, ok = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string lang, count, sentence;
    std::getline(ls, lang, '\t');
    std::getline(ls, count, '\t');
    std::getline(ls, sentence);
    ok += count_syllables(sentence, parse_language(lang)) == std::stoul(count);
    ++n;
  }
  return {n == 50 && ok == n, std::to_string(ok) + "/" + std::to_string(n) + " sentences"};
}

Outcome gradient_check() {
  Rng rng(909);
  const std::size_t in = 12, out = 8;
  std::vector<TrainingSample> data;
  for (int i = 0; i < 200; ++i) {
    TrainingSample s;
    s.text.resize(in);
    s.z1.resize(out);
    s.z2.resize(out);
    for (double& v : s.text) v = rng.normal();
    for (double& v : s.z1) v = rng.normal();
    for (double& v : s.z2) v = rng.normal();
    s.label = rng.uniform() < 0.5 ? 1 : 0;
    data.push_back(std::move(s));
  }
  const ClassifierConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    ProjectionHead h = ProjectionHead::random(in, out, 50 + trial);
    for (double& g : h.gamma) g = 1.0 + 0.3 * rng.normal();
    for (double& b : h.beta) b = 0.1 * rng.normal();
    for (double& b : h.b) b = 0.2 * rng.normal();
    std::vector<std::size_t> batch;
    for (int k = 0; k < 32; ++k) batch.push_back(rng.index(data.size()));
    HeadGradient g;
    head_loss_and_grad(h, data, batch, cfg, &g);
    double diff2 = 0.0, an2 = 0.0, fd2 = 0.0;
    auto probe = [&](std::vector<double>& param, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param[i], eps = 1e-6;
        param[i] = keep + eps;
        const double up = head_loss_and_grad(h, data, batch, cfg, nullptr);
        param[i] = keep - eps;
        const double dn = head_loss_and_grad(h, data, batch, cfg, nullptr);
        param[i] = keep;
        const double fd = (up - dn) / (2 * eps);
        diff2 += (grad[i] - fd) * (grad[i] - fd);
        an2 += grad[i] * grad[i];
        fd2 += fd * fd;
      }
    };
    probe(h.W, g.W);
    probe(h.b, g.b);
    probe(h.gamma, g.gamma);
    probe(h.beta, g.beta);
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(an2), std::sqrt(fd2)));
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " over 10 minibatches"};
}

struct ClosedLoop {
  std::vector<MixtureRecord> records;
  QuantizerSet qs;
  std::vector<EvalRow> rows;
};

ClosedLoop run_closed_loop(double sigma, std::optional<double> leak_db) {
  PipelineConfig cfg;
  cfg.seed = 77;
  cfg.leak_db = leak_db;
  cfg.embeddings.noise_sigma = sigma;
  const auto pool = prepare_pool(corpus(), "test", cfg);
  ClosedLoop c;
  c.records = build_dataset(pool, "test", 500, cfg);
  c.qs = fit_quantizers(c.records, cfg);
  label_records(c.records, c.qs, cfg);
  prompt_records(c.records, cfg);
  const auto provider = make_provider(cfg, c.records);
  c.rows = classify_records(c.records, *provider,
                            ProjectionHead::identity(provider_text_dim(*provider), provider->dim()),
                            cfg, c.qs);
  return c;
}

const ClosedLoop& noisy_loop() {
  static const ClosedLoop c = run_closed_loop(0.5, 15.0);
  return c;
}

double closed_loop_seconds = 0.0;

Outcome closed_loop() {
  const auto t0 = Clock::now();
  const ClosedLoop clean = run_closed_loop(0.0, std::nullopt);
  std::size_t n = 0, ok = 0;
  for (const auto& r : clean.rows) {
    if (r.config != PromptConfig::individual || r.kind != CueKind::relative) continue;
    if (r.category == kSimilar || r.category == kSame) continue;
    ++n;
    ok += r.correct();
  }
  const ClosedLoop& noisy = noisy_loop();
  closed_loop_seconds = seconds_since(t0);

  std::string slopes;
  bool slopes_ok = true;
  std::size_t cues = 0;
  for (const auto& c : accuracy_curves(noisy.rows)) {
    ++cues;
    const bool pos = c.fit && c.fit->slope > 0.0;
    slopes_ok = slopes_ok && pos;
    slopes += c.cue + "=" + (c.fit ? fmt("%.3g", c.fit->slope) : std::string("none")) + " ";
  }
  slopes_ok = slopes_ok && cues == kContinuousAttributes.size();

  // Pooled over cues with |delta| in threshold units, accuracy per quartile.
  std::vector<std::pair<double, int>> pooled;
  const ThresholdTable t = ThresholdTable::defaults();
  for (const auto& r : noisy.rows) {
    if (r.config != PromptConfig::individual || r.kind != CueKind::relative || !r.delta) continue;
    if (r.category == kSimilar) continue;
    pooled.push_back({std::abs(*r.delta) / t.at(parse_attribute(r.cue)).theta, r.correct()});
  }
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> acc;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t lo = b * pooled.size() / 4, hi = (b + 1) * pooled.size() / 4;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += pooled[i].second;
    acc.push_back(hi > lo ? s / static_cast<double>(hi - lo) : 0.0);
  }
  bool monotone = pooled.size() >= 4;
  for (std::size_t b = 1; b < acc.size(); ++b) monotone = monotone && acc[b] > acc[b - 1];
  std::string accs;
  for (double a : acc) accs += fmt("%.3f ", a);

  const bool pass = n > 0 && ok == n && slopes_ok && monotone && closed_loop_seconds < 600.0;
  return {pass, "clean " + std::to_string(ok) + "/" + std::to_string(n) +
                    "; noisy |delta| quartile acc " + accs + "; slopes " + slopes +
                    fmt("; %.1f s", closed_loop_seconds)};
}

Outcome relative_vs_independent() {
  const ClosedLoop& c = noisy_loop();
  const ThresholdTable t = ThresholdTable::defaults();
  std::string per;
  bool fractions_ok = true;
  for (const auto& [a, q] : c.qs) {
    const Threshold& th = t.at(a);
    double vmin = 0.0, vmax = 0.0;
    bool seen = false;
    for (const auto& r : c.records)
      for (const auto* av : {&r.attr1, &r.attr2})
        if (const auto x = av->continuous(a)) {
          vmin = seen ? std::min(vmin, *x) : *x;
          vmax = seen ? std::max(vmax, *x) : *x;
          seen = true;
        }
    // outer bins extend to the observed extremes
    auto wide = [&](std::size_t bin) {
      const double lo = bin == 0 ? vmin : q.breakpoints[bin - 1];
      const double hi = bin == q.breakpoints.size() ? vmax : q.breakpoints[bin];
      return (th.mode == DiffMode::percent ? 100.0 * (hi - lo) / lo : hi - lo) > th.theta;
    };
    std::size_t same = 0, non_similar = 0;
    for (const auto& r : c.records) {
      const auto x = r.attributes_tar().continuous(a), y = r.attributes_inf().continuous(a);
      if (!x || !y || q.bin(*x) != q.bin(*y) || !wide(q.bin(*x))) continue;
      ++same;
      non_similar += relative_category(a, *x, *y, t).category != kSimilar;
    }
    fractions_ok = fractions_ok && (same == 0 || non_similar > 0);
    per += std::string(attribute_id(a)) + "=" + std::to_string(non_similar) + "/" +
           std::to_string(same) + " ";
  }
  std::size_t n = 0, correct = 0;
  for (const auto& r : c.rows) {
    if (r.config != PromptConfig::individual || r.kind != CueKind::relative) continue;
    if (r.category == kSimilar || !r.ind_tar || !r.ind_inf || *r.ind_tar != *r.ind_inf) continue;
    ++n;
    correct += r.correct();
  }
  const Wilson w = wilson_interval(correct, n);
  return {fractions_ok && n > 0 && w.lo > 0.5,
          "same-bin non-similar " + per + "; accuracy " + std::to_string(correct) + "/" +
              std::to_string(n) + fmt(", Wilson lower %.3f", w.lo)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  return out;
}

Outcome determinism() {
  PipelineConfig cfg;
  cfg.seed = 9;
  cfg.counts = {30, 0, 30};
  cfg.jobs = 2;
  const fs::path manifest = scratch() / "corpus" / "manifest.jsonl";
  auto once = [&](const std::string& name) {
    const fs::path d = scratch() / name;
    cmd_simulate(cfg, manifest, d, "all", std::nullopt);
    cmd_cues(cfg, d, std::nullopt);
    cmd_prompts(cfg, d);
    cmd_classify(cfg, d, std::nullopt, "test", d / "predictions.jsonl");
    cmd_analyze(cfg, d, d / "predictions.jsonl", d / "report");
    return tree(d);
  };
  corpus();
  const auto a = once("det_a"), b = once("det_b");
  std::size_t differ = a.size() == b.size() ? 0 : 1;
  for (const auto& [k, v] : a) differ += !b.count(k) || b.at(k) != v;
  return {differ == 0, std::to_string(a.size()) + " files compared, " + std::to_string(differ) +
                           " differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"si_sdr_scale_invariance", si_sdr_scale_invariance},
      {"pit_oracle_equivalence", pit_equivalence},
      {"cue_antisymmetry", cue_antisymmetry},
      {"threshold_defaults", table_defaults},
      {"mixture_rules", mixture_rules},
      {"rir_fidelity", rir_fidelity},
      {"pitch_tracker", pitch_tracker},
      {"syllable_parser", syllable_fixture},
      {"gradient_check", gradient_check},
      {"closed_loop", closed_loop},
      {"relative_vs_independent", relative_vs_independent},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch());
  std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failed, checks.size());
  return failed == 0 ? 0 : 1;
}
