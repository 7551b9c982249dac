#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relcue/error.hpp"

namespace relcue {

inline constexpr int kSampleRate = 16000;
inline constexpr double kRmsFloorDb = -120.0;
inline constexpr double kSiSdrClampDb = 60.0;
inline constexpr double kSiSdrEps = 1e-10;

// Half-open time interval in seconds.
struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Mono audio. Immutable after construction.
class WaveBuffer {
 public:
  WaveBuffer() = default;
  explicit WaveBuffer(std::vector<double> samples,
                      int sample_rate_hz = kSampleRate)
      : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
    require(sample_rate_hz_ > 0, "sample rate must be positive");
  }

  std::span<const double> samples() const { return samples_; }
  const std::vector<double>& vec() const { return samples_; }
  int sample_rate() const { return sample_rate_hz_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  double duration() const {
    return static_cast<double>(samples_.size()) / sample_rate_hz_;
  }
  double operator[](std::size_t i) const { return samples_[i]; }

  WaveBuffer scaled(double gain) const {
    std::vector<double> out(samples_);
    for (double& x : out) x *= gain;
    return WaveBuffer(std::move(out), sample_rate_hz_);
  }

  // Sub-range [begin, end) in samples, clamped to the buffer.
  WaveBuffer slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, samples_.size());
    begin = std::min(begin, end);
    return WaveBuffer(std::vector<double>(samples_.begin() + begin,
                                          samples_.begin() + end),
                      sample_rate_hz_);
  }

  // Zero-padded copy: `lead` zeros before, total length `total`.
  WaveBuffer placed(std::size_t lead, std::size_t total) const {
    std::vector<double> out(total, 0.0);
    for (std::size_t i = 0; i < samples_.size() && lead + i < total; ++i)
      out[lead + i] = samples_[i];
    return WaveBuffer(std::move(out), sample_rate_hz_);
  }

  double peak() const {
    double p = 0.0;
    for (double x : samples_) p = std::max(p, std::abs(x));
    return p;
  }

  friend bool operator==(const WaveBuffer&, const WaveBuffer&) = default;

 private:
  std::vector<double> samples_;
  int sample_rate_hz_ = kSampleRate;
};

inline double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double to_db_power(double p) {
  if (!(p > 0.0)) return kRmsFloorDb;
  return std::max(kRmsFloorDb, 10.0 * std::log10(p));
}

// Sample index range covered by a segment, clamped to [0, n).
inline std::pair<std::size_t, std::size_t> segment_samples(const Segment& s,
                                                           int fs,
                                                           std::size_t n) {
  const double b = std::max(0.0, std::floor(s.start_s * fs));
  const double e = std::max(0.0, std::ceil(s.end_s * fs));
  const auto bi = std::min(n, static_cast<std::size_t>(b));
  const auto ei = std::min(n, static_cast<std::size_t>(e));
  return {bi, std::max(bi, ei)};
}

// 20*log10(RMS) over the union of `segments`, or over the whole buffer.
// Silent input returns the -120 dB floor.
inline double rms_db(const WaveBuffer& w,
                     const std::optional<std::vector<Segment>>& segments =
                         std::nullopt) {
  require(!w.empty(), "rms_db: empty buffer");
  const auto x = w.samples();
  if (!segments) return to_db_power(energy(x) / static_cast<double>(x.size()));

  std::vector<char> mask(x.size(), 0);
  for (const Segment& s : *segments) {
    require(s.end_s >= s.start_s, "rms_db: segment end before start");
    require(s.start_s >= 0.0 && s.start_s <= w.duration() + 1e-9,
            "rms_db: segment outside buffer");
    const auto [b, e] = segment_samples(s, w.sample_rate(), x.size());
    std::fill(mask.begin() + b, mask.begin() + e, 1);
  }
  double e = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    e += x[i] * x[i];
    ++count;
  }
  if (count == 0) return kRmsFloorDb;
  return to_db_power(e / static_cast<double>(count));
}

inline void check_aligned(const WaveBuffer& a, const WaveBuffer& b,
                          const char* who) {
  require(a.size() == b.size(),
          std::string(who) + ": length mismatch (" + std::to_string(a.size()) +
              " vs " + std::to_string(b.size()) + ")");
  require(a.sample_rate() == b.sample_rate(),
          std::string(who) + ": sample rate mismatch");
}

// Scale-invariant SDR in dB, clamped to [-60, 60].
inline double si_sdr(const WaveBuffer& estimate, const WaveBuffer& reference) {
  check_aligned(estimate, reference, "si_sdr");
  require(!reference.empty(), "si_sdr: empty reference");
  const auto e = estimate.samples();
  const auto s = reference.samples();
  const double ss = energy(s);
  require(ss > 0.0, "si_sdr: all-zero reference");
  const double alpha = dot(e, s) / ss;
  double target = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double t = alpha * s[i];
    const double n = e[i] - t;
    target += t * t;
    noise += n * n;
  }
  const double db = 10.0 * std::log10(target / (noise + kSiSdrEps));
  if (std::isnan(db)) return -kSiSdrClampDb;
  return std::clamp(db, -kSiSdrClampDb, kSiSdrClampDb);
}

inline double si_sdri(const WaveBuffer& estimate, const WaveBuffer& reference,
                      const WaveBuffer& mixture) {
  return si_sdr(estimate, reference) - si_sdr(mixture, reference);
}

// Gain g such that 10*log10(|g*signal|^2 / |interference|^2) == sir_db.
inline double sir_gain(const WaveBuffer& signal, const WaveBuffer& interference,
                       double sir_db) {
  const double es = energy(signal.samples());
  const double ei = energy(interference.samples());
  require(ei > 0.0, "scale_to_sir: all-zero interference");
  require(es > 0.0, "scale_to_sir: all-zero signal cannot reach target SIR");
  return std::sqrt(ei / es * std::pow(10.0, sir_db / 10.0));
}

inline WaveBuffer scale_to_sir(const WaveBuffer& signal,
                               const WaveBuffer& interference, double sir_db) {
  return signal.scaled(sir_gain(signal, interference, sir_db));
}

inline double measured_sir_db(const WaveBuffer& signal,
                              const WaveBuffer& interference) {
  return 10.0 * std::log10(energy(signal.samples()) /
                           energy(interference.samples()));
}

namespace detail {

// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline std::vector<double> convolve_direct(std::span<const double> a,
                                           std::span<const double> k) {
  std::vector<double> out(a.size() + k.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < k.size(); ++j) out[i + j] += ai * k[j];
  }
  return out;
}

class FftBuffers {
 public:
  explicit FftBuffers(std::size_t n)
      : n_(n),
        real_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        spec_a_(static_cast<fftw_complex*>(
            fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))),
        spec_b_(static_cast<fftw_complex*>(
            fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(fftw_planner_mutex());
    const int ni = static_cast<int>(n);
    fwd_a_ = fftw_plan_dft_r2c_1d(ni, real_, spec_a_, FFTW_ESTIMATE);
    fwd_b_ = fftw_plan_dft_r2c_1d(ni, real_, spec_b_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(ni, spec_a_, real_, FFTW_ESTIMATE);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
  ~FftBuffers() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(fwd_a_);
      fftw_destroy_plan(fwd_b_);
      fftw_destroy_plan(inv_);
    }
    fftw_free(real_);
    fftw_free(spec_a_);
    fftw_free(spec_b_);
  }

  std::vector<double> convolve(std::span<const double> a,
                               std::span<const double> k) {
    load(a);
    fftw_execute(fwd_a_);
    load(k);
    fftw_execute(fwd_b_);
    for (std::size_t i = 0; i < n_ / 2 + 1; ++i) {
      const double re = spec_a_[i][0] * spec_b_[i][0] -
                        spec_a_[i][1] * spec_b_[i][1];
      const double im = spec_a_[i][0] * spec_b_[i][1] +
                        spec_a_[i][1] * spec_b_[i][0];
      spec_a_[i][0] = re;
      spec_a_[i][1] = im;
    }
    fftw_execute(inv_);
    std::vector<double> out(a.size() + k.size() - 1);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = real_[i] * scale;
    return out;
  }

 private:
  void load(std::span<const double> x) {
    std::copy(x.begin(), x.end(), real_);
    std::fill(real_ + x.size(), real_ + n_, 0.0);
  }

  std::size_t n_;
  double* real_;
  fftw_complex* spec_a_;
  fftw_complex* spec_b_;
  fftw_plan fwd_a_{};
  fftw_plan fwd_b_{};
  fftw_plan inv_{};
};

}  // namespace detail

// Full linear convolution, length len(w) + len(kernel) - 1.
inline std::vector<double> convolve(std::span<const double> a,
                                    std::span<const double> kernel) {
  require(!kernel.empty(), "convolve: empty kernel");
  if (a.empty()) return {};
  const std::size_t small = std::min(a.size(), kernel.size());
  if (small <= 64 || a.size() * kernel.size() <= 1u << 16)
    return detail::convolve_direct(a, kernel);
  detail::FftBuffers fft(detail::next_pow2(a.size() + kernel.size() - 1));
  return fft.convolve(a, kernel);
}

inline WaveBuffer convolve(const WaveBuffer& w, std::span<const double> kernel) {
  return WaveBuffer(convolve(w.samples(), kernel), w.sample_rate());
}

inline WaveBuffer operator+(const WaveBuffer& a, const WaveBuffer& b) {
  check_aligned(a, b, "add");
  std::vector<double> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return WaveBuffer(std::move(out), a.sample_rate());
}

}  // namespace relcue
