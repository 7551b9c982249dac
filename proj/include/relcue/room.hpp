#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "relcue/error.hpp"
#include "relcue/rng.hpp"
#include "relcue/wave.hpp"

namespace relcue {

inline constexpr double kSpeedOfSound = 343.0;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

struct RoomSampling {
  Range length_m{9.0, 11.0};
  Range width_m{9.0, 11.0};
  Range height_m{2.6, 3.5};
  Range rt60_s{0.3, 0.6};
  Range distance_m{0.3, 1.5};
  Range source_height_m{1.6, 1.9};
  // Microphone height; the room's vertical center when unset.
  std::optional<double> mic_height_m;
  double wall_margin_m = 0.1;
  int max_order = 30;
  friend bool operator==(const RoomSampling&, const RoomSampling&) = default;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double norm(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct RoomSpec {
  double length_m = 10.0;
  double width_m = 10.0;
  double height_m = 3.0;
  double rt60_s = 0.45;
  Vec3 mic;

  double volume() const { return length_m * width_m * height_m; }
  double surface() const {
    return 2.0 * (length_m * width_m + length_m * height_m + width_m * height_m);
  }
  friend bool operator==(const RoomSpec&, const RoomSpec&) = default;
};

struct SourcePlacement {
  double horizontal_distance_m = 1.0;
  double azimuth_rad = 0.0;
  double source_height_m = 1.7;
  Vec3 position;
  friend bool operator==(const SourcePlacement&, const SourcePlacement&) = default;
};

inline RoomSpec make_room(double length, double width, double height, double rt60,
                          std::optional<double> mic_height = std::nullopt) {
  RoomSpec r{length, width, height, rt60, {}};
  r.mic = {length / 2.0, width / 2.0, mic_height.value_or(height / 2.0)};
  return r;
}

inline RoomSpec sample_room(Rng& rng, const RoomSampling& s = {}) {
  const double l = rng.uniform(s.length_m.lo, s.length_m.hi);
  const double w = rng.uniform(s.width_m.lo, s.width_m.hi);
  const double h = rng.uniform(s.height_m.lo, s.height_m.hi);
  const double t = rng.uniform(s.rt60_s.lo, s.rt60_s.hi);
  return make_room(l, w, h, t, s.mic_height_m);
}

inline bool inside(const RoomSpec& r, const Vec3& p, double margin) {
  return p.x > margin && p.x < r.length_m - margin && p.y > margin &&
         p.y < r.width_m - margin && p.z > margin && p.z < r.height_m - margin;
}

inline SourcePlacement place_source(const RoomSpec& room, double distance,
                                    double azimuth, double height) {
  SourcePlacement p{distance, azimuth, height, {}};
  p.position = {room.mic.x + distance * std::cos(azimuth),
                room.mic.y + distance * std::sin(azimuth), height};
  return p;
}

inline SourcePlacement sample_placement(Rng& rng, const RoomSpec& room,
                                        const RoomSampling& s = {}) {
  const double d = rng.uniform(s.distance_m.lo, s.distance_m.hi);
  const double h = rng.uniform(s.source_height_m.lo, s.source_height_m.hi);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double az = rng.uniform(0.0, 2.0 * std::numbers::pi);
    SourcePlacement p = place_source(room, d, az, h);
    if (inside(room, p.position, s.wall_margin_m)) return p;
  }
  throw Error("sample_placement: no valid azimuth after 100 attempts");
}

inline double source_mic_distance(const RoomSpec& room, const SourcePlacement& p) {
  return norm(room.mic, p.position);
}

// Sabine: alpha = 0.161 V / (T60 S), clamped to (0, 0.99].
inline double rt60_to_absorption(const RoomSpec& room) {
  require(room.rt60_s > 0.0, "rt60_to_absorption: rt60 must be positive");
  const double a = 0.161 * room.volume() / (room.rt60_s * room.surface());
  return std::clamp(a, 1e-6, 0.99);
}

struct Rir {
  std::vector<double> taps;
  std::size_t direct_path_index = 0;
  double absorption = 0.0;
  friend bool operator==(const Rir&, const Rir&) = default;
};

// Schroeder backward integration; T60 extrapolated from the -5..-25 dB
// portion of the energy decay curve.
inline double schroeder_t20(std::span<const double> h, int fs) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  require(acc > 0.0, "schroeder_t20: silent impulse response");
  std::size_t i5 = 0, i25 = 0;
  bool found5 = false;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / acc + 1e-300);
    if (!found5 && db <= -5.0) {
      i5 = i;
      found5 = true;
    }
    if (db <= -25.0) {
      i25 = i;
      break;
    }
  }
  if (!found5 || i25 <= i5 + 1) return 0.0;
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(i25 - i5);
  for (std::size_t i = i5; i < i25; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double y = 10.0 * std::log10(edc[i] / acc + 1e-300);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  return slope < 0.0 ? -60.0 / slope : 0.0;
}

namespace detail {

struct ImageSource {
  double delay_samples;
  double gain;
};

template <typename Fn>
void for_each_image(const RoomSpec& room, const Vec3& src, double alpha,
                    int max_order, double max_delay_samples, int fs, Fn&& fn) {
  const double beta = std::sqrt(1.0 - alpha);
  const std::array<double, 3> dims{room.length_m, room.width_m, room.height_m};
  const std::array<double, 3> s{src.x, src.y, src.z};
  const std::array<double, 3> m{room.mic.x, room.mic.y, room.mic.z};
  const int n = max_order;
  // Per-axis image offset and reflection count for index (n, q).
  auto axis = [&](int ax, int ni, int qi, double& offset, int& refl) {
    const double img = (1 - 2 * qi) * s[ax] + 2.0 * ni * dims[ax];
    offset = img - m[ax];
    refl = std::abs(2 * ni - qi);
  };
  for (int nx = -n; nx <= n; ++nx)
    for (int qx = 0; qx <= 1; ++qx) {
      double ox;
      int rx;
      axis(0, nx, qx, ox, rx);
      if (rx > max_order) continue;
      for (int ny = -n; ny <= n; ++ny)
        for (int qy = 0; qy <= 1; ++qy) {
          double oy;
          int ry;
          axis(1, ny, qy, oy, ry);
          if (rx + ry > max_order) continue;
          for (int nz = -n; nz <= n; ++nz)
            for (int qz = 0; qz <= 1; ++qz) {
              double oz;
              int rz;
              axis(2, nz, qz, oz, rz);
              const int refl = rx + ry + rz;
              if (refl > max_order) continue;
              const double d = std::sqrt(ox * ox + oy * oy + oz * oz);
              const double delay = d / kSpeedOfSound * fs;
              if (delay >= max_delay_samples) continue;
              fn(ImageSource{delay, std::pow(beta, refl) / (4.0 * std::numbers::pi * d)});
            }
        }
    }
}

inline constexpr int kSincHalfWidth = 16;

inline void add_fractional_impulse(std::vector<double>& h, double t, double g) {
  const auto center = static_cast<long>(std::floor(t));
  const double frac = t - static_cast<double>(center);
  if (frac == 0.0) {
    if (center >= 0 && center < static_cast<long>(h.size())) h[center] += g;
    return;
  }
  for (long k = center - kSincHalfWidth + 1; k <= center + kSincHalfWidth; ++k) {
    if (k < 0 || k >= static_cast<long>(h.size())) continue;
    const double x = static_cast<double>(k) - t;
    if (std::abs(x) >= kSincHalfWidth) continue;
    const double px = std::numbers::pi * x;
    const double sinc = std::sin(px) / px;
    const double win = 0.5 * (1.0 + std::cos(px / kSincHalfWidth));
    h[k] += g * sinc * win;
  }
}

}  // namespace detail

struct RirOptions {
  // Adjust the Sabine absorption until the simulated decay matches the
  // requested RT60 (the image-source decay of flat rooms runs long).
  bool calibrate_absorption = true;
  int calibration_iterations = 6;
  double calibration_tolerance = 0.01;
};

inline std::size_t rir_length(const RoomSpec& room, double distance, int fs) {
  return static_cast<std::size_t>(std::ceil(room.rt60_s * fs)) +
         static_cast<std::size_t>(std::ceil(distance / kSpeedOfSound * fs)) +
         detail::kSincHalfWidth + 1;
}

// Absorption used for the given room and source after calibration.
inline double calibrated_absorption(const RoomSpec& room, const SourcePlacement& p,
                                    int max_order, const RirOptions& opt = {},
                                    int fs = kSampleRate) {
  double alpha = rt60_to_absorption(room);
  if (!opt.calibrate_absorption || max_order == 0) return alpha;
  const std::size_t n = rir_length(room, source_mic_distance(room, p), fs);
  for (int it = 0; it < opt.calibration_iterations; ++it) {
    std::vector<double> h(n, 0.0);
    detail::for_each_image(room, p.position, alpha, max_order, static_cast<double>(n), fs,
                           [&](const detail::ImageSource& im) {
                             h[static_cast<std::size_t>(std::lround(im.delay_samples)) %
                               n] += im.gain;
                           });
    const double t = schroeder_t20(h, fs);
    if (!(t > 0.0)) break;
    const double ratio = t / room.rt60_s;
    if (std::abs(ratio - 1.0) < opt.calibration_tolerance) break;
    alpha = std::clamp(1.0 - std::exp(std::log(1.0 - alpha) * ratio), 1e-6, 0.99);
  }
  return alpha;
}

inline Rir image_source_rir(const RoomSpec& room, const SourcePlacement& p,
                            int max_order = 30, const RirOptions& opt = {},
                            int fs = kSampleRate) {
  require(max_order >= 0, "image_source_rir: max_order must be non-negative");
  const double distance = source_mic_distance(room, p);
  require(distance > 0.0, "image_source_rir: source coincides with microphone");
  const std::size_t n = rir_length(room, distance, fs);
  Rir rir;
  rir.absorption = calibrated_absorption(room, p, max_order, opt, fs);
  rir.direct_path_index =
      static_cast<std::size_t>(std::lround(distance / kSpeedOfSound * fs));
  rir.taps.assign(n, 0.0);
  detail::for_each_image(room, p.position, rir.absorption, max_order,
                         static_cast<double>(n), fs,
                         [&](const detail::ImageSource& im) {
                           detail::add_fractional_impulse(rir.taps, im.delay_samples,
                                                          im.gain);
                         });
  // Taps are held at single precision so the on-disk cache is lossless.
  for (double& t : rir.taps) t = static_cast<double>(static_cast<float>(t));
  return rir;
}

// Full convolution; the reverberant tail is kept.
inline WaveBuffer apply_rir(const WaveBuffer& w, const Rir& rir) {
  return convolve(w, rir.taps);
}

// ---------------------------------------------------------------------------
// Disk cache: "RIRC", u32 sample rate, u32 tap count, float32 taps (LE).

inline std::string rir_cache_key(const RoomSpec& room, const SourcePlacement& p,
                                 int max_order) {
  const double fields[] = {room.length_m, room.width_m, room.height_m, room.rt60_s,
                           room.mic.x,    room.mic.y,   room.mic.z,    p.position.x,
                           p.position.y,  p.position.z, static_cast<double>(max_order)};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double f : fields) {
    char bytes[sizeof(double)];
    std::memcpy(bytes, &f, sizeof f);
    h = fnv1a(std::string_view(bytes, sizeof bytes), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void save_rir(const std::filesystem::path& path, const Rir& rir,
                     int fs = kSampleRate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write RIR cache file " + path.string());
  const auto count = static_cast<std::uint32_t>(rir.taps.size());
  const auto rate = static_cast<std::uint32_t>(fs);
  out.write("RIRC", 4);
  out.write(reinterpret_cast<const char*>(&rate), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (double t : rir.taps) {
    const auto f = static_cast<float>(t);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
}

inline std::vector<double> load_rir_taps(const std::filesystem::path& path,
                                         int fs = kSampleRate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open RIR cache file " + path.string());
  char magic[4];
  std::uint32_t rate = 0, count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rate), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || std::memcmp(magic, "RIRC", 4) != 0)
    throw Error("RIR cache file " + path.string() + ": bad header");
  if (rate != static_cast<std::uint32_t>(fs))
    throw Error("RIR cache file " + path.string() + ": sample rate mismatch");
  std::vector<double> taps(count);
  for (auto& t : taps) {
    float f;
    in.read(reinterpret_cast<char*>(&f), 4);
    t = f;
  }
  if (!in) throw Error("RIR cache file " + path.string() + ": truncated");
  return taps;
}

class RirCache {
 public:
  explicit RirCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  Rir get(const RoomSpec& room, const SourcePlacement& p, int max_order,
          const RirOptions& opt = {}) const {
    const auto path = dir_ / (rir_cache_key(room, p, max_order) + ".rir");
    if (std::filesystem::exists(path)) {
      Rir r;
      r.taps = load_rir_taps(path);
      r.direct_path_index = static_cast<std::size_t>(
          std::lround(source_mic_distance(room, p) / kSpeedOfSound * kSampleRate));
      r.absorption = calibrated_absorption(room, p, max_order, opt);
      return r;
    }
    Rir r = image_source_rir(room, p, max_order, opt);
    save_rir(path, r);
    return r;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace relcue
