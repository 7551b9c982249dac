#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "relcue/attributes.hpp"
#include "relcue/cues.hpp"
#include "relcue/error.hpp"
#include "relcue/prompts.hpp"
#include "relcue/rng.hpp"

namespace relcue {

using Embedding = std::vector<double>;

// ---------------------------------------------------------------------------
// Store: "EMBD", u16 version, u32 dim, u64 count, then per record u16 key
// length, key bytes, dim float32 values. Little-endian.

inline constexpr std::uint16_t kEmbeddingStoreVersion = 1;

class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::uint32_t dim = 0) : dim_(dim) {}

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return values_.size(); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::vector<float>>& entries() const { return values_; }

  void insert(const std::string& key, const Embedding& v) {
    require(!key.empty() && key.size() <= 0xffff, "embedding key length out of range");
    if (dim_ == 0) dim_ = static_cast<std::uint32_t>(v.size());
    if (v.size() != dim_)
      throw Error("embedding '" + key + "': dimension " + std::to_string(v.size()) +
                  " does not match store dimension " + std::to_string(dim_));
    if (values_.count(key)) throw Error("embedding store: duplicate key '" + key + "'");
    std::vector<float> f(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) throw Error("embedding '" + key + "': non-finite value");
      f[i] = static_cast<float>(v[i]);
    }
    values_.emplace(key, std::move(f));
  }

  Embedding get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error("embedding store: missing key '" + key + "'");
    return Embedding(it->second.begin(), it->second.end());
  }

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;

 private:
  std::uint32_t dim_;
  std::map<std::string, std::vector<float>> values_;
};

inline void save_store(const EmbeddingStore& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedding store " + path.string());
  auto put = [&](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  const std::uint16_t version = kEmbeddingStoreVersion;
  const std::uint32_t dim = s.dim();
  const std::uint64_t count = s.size();
  put("EMBD", 4);
  put(&version, 2);
  put(&dim, 4);
  put(&count, 8);
  for (const auto& [key, v] : s.entries()) {
    const auto len = static_cast<std::uint16_t>(key.size());
    put(&len, 2);
    put(key.data(), key.size());
    put(v.data(), 4 * v.size());
  }
}

inline EmbeddingStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding store " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n, const std::string& what) {
    if (pos + n > bytes.size())
      throw Error("embedding store " + path.string() + ": truncated " + what);
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[4];
  std::uint16_t version = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  take(magic, 4, "header");
  if (std::memcmp(magic, "EMBD", 4) != 0)
    throw Error("embedding store " + path.string() + ": bad magic");
  take(&version, 2, "header");
  if (version != kEmbeddingStoreVersion)
    throw Error("embedding store " + path.string() + ": unsupported version " +
                std::to_string(version));
  take(&dim, 4, "header");
  take(&count, 8, "header");
  require(dim > 0, "embedding store " + path.string() + ": zero dimension");
  EmbeddingStore s(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    std::uint16_t len = 0;
    take(&len, 2, "record " + std::to_string(r));
    std::string key(len, '\0');
    take(key.data(), len, "key of record " + std::to_string(r));
    if (s.contains(key))
      throw Error("embedding store " + path.string() + ": duplicate key '" + key + "'");
    std::vector<float> f(dim);
    take(f.data(), 4 * static_cast<std::size_t>(dim), "values of '" + key + "'");
    Embedding v(f.begin(), f.end());
    for (double x : v)
      if (!std::isfinite(x))
        throw Error("embedding store " + path.string() + ": non-finite value in '" + key +
                    "'");
    s.insert(key, v);
  }
  if (pos != bytes.size())
    throw Error("embedding store " + path.string() + ": trailing bytes after " +
                std::to_string(count) + " records");
  return s;
}

// ---------------------------------------------------------------------------
// Providers.

// What a provider may use to embed one separated channel.
struct AudioQuery {
  std::string key;                         // "<mixture id>/<channel 1|2>"
  const AttributeVector* own = nullptr;    // source dominating this channel
  const AttributeVector* other = nullptr;  // leaked source
  std::optional<double> leak_db;
};

struct TextQuery {
  std::string key;  // prompt text
  const PromptRecord* prompt = nullptr;
  std::string context;  // mixture id; oracle noise is drawn per (context, text)
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed_audio(const AudioQuery& q) const = 0;
  virtual Embedding embed_text(const TextQuery& q) const = 0;
};

inline std::string audio_key(const std::string& mixture_id, int channel) {
  return mixture_id + "/" + std::to_string(channel);
}

// Externally computed embeddings: audio keyed by audio_key(), text by the
// prompt text.
class FileProvider : public EmbeddingProvider {
 public:
  FileProvider(EmbeddingStore audio, EmbeddingStore text)
      : audio_(std::move(audio)), text_(std::move(text)) {}

  std::size_t dim() const override { return audio_.dim(); }
  std::size_t text_dim() const { return text_.dim(); }
  Embedding embed_audio(const AudioQuery& q) const override { return audio_.get(q.key); }
  Embedding embed_text(const TextQuery& q) const override { return text_.get(q.key); }

 private:
  EmbeddingStore audio_;
  EmbeddingStore text_;
};

// ---------------------------------------------------------------------------
// Oracle encoder. The semantic vector u has one block per attribute:
// continuous attributes map to (sin phi, cos phi) with phi a squashed,
// monotone function of the value; gender and language are one-hot;
// emotion and transcription are hashed unit vectors. Audio embeds as
// layer-normalized (u, -u); text as the positive and negative parts of a
// cue direction d in the same space.

struct OracleScale {
  double center;
  double scale;
  bool log_domain;
  friend bool operator==(const OracleScale&, const OracleScale&) = default;
};

inline OracleScale oracle_scale(Attribute a) {
  switch (a) {
    case Attribute::mean_f0: return {std::log(160.0), 0.6, true};
    case Attribute::f0_span: return {std::log(80.0), 0.8, true};
    case Attribute::age: return {40.0, 20.0, false};
    case Attribute::speaking_duration: return {std::log(3.0), 0.5, true};
    case Attribute::speaking_rate: return {std::log(240.0), 0.4, true};
    case Attribute::rms_energy: return {-30.0, 10.0, false};
    case Attribute::distance: return {0.9, 0.4, false};
    case Attribute::appearance_time: return {1.5, 1.5, false};
    default: throw Error("oracle_scale: attribute is not continuous");
  }
}

struct OracleLayout {
  static constexpr std::size_t kGenderDim = 2;
  static constexpr std::size_t kLanguageDim = 5;
  static constexpr std::size_t kEmotionDim = 4;
  static constexpr std::size_t kTranscriptionDim = 5;
  static constexpr std::size_t kSemanticDim =
      2 * 8 + kGenderDim + kLanguageDim + kEmotionDim + kTranscriptionDim;
  static constexpr std::size_t kDim = 2 * kSemanticDim;

  static std::size_t offset(Attribute a) {
    for (std::size_t i = 0; i < kContinuousAttributes.size(); ++i)
      if (kContinuousAttributes[i] == a) return 2 * i;
    switch (a) {
      case Attribute::gender: return 16;
      case Attribute::language: return 16 + kGenderDim;
      case Attribute::emotion: return 16 + kGenderDim + kLanguageDim;
      case Attribute::transcription: return 16 + kGenderDim + kLanguageDim + kEmotionDim;
      default: throw Error("oracle layout: unknown attribute");
    }
  }

  static std::size_t width(Attribute a) {
    if (is_continuous(a)) return 2;
    switch (a) {
      case Attribute::gender: return kGenderDim;
      case Attribute::language: return kLanguageDim;
      case Attribute::emotion: return kEmotionDim;
      default: return kTranscriptionDim;
    }
  }
};

using OracleScales = std::map<Attribute, OracleScale>;

inline OracleScale oracle_scale(Attribute a, const OracleScales& fitted) {
  const auto it = fitted.find(a);
  return it != fitted.end() ? it->second : oracle_scale(a);
}

inline double oracle_angle(Attribute a, double x, const OracleScales& fitted = {}) {
  const OracleScale s = oracle_scale(a, fitted);
  const double g = s.log_domain ? std::log(x) : x;
  return 0.5 * std::numbers::pi * std::tanh((g - s.center) / s.scale);
}

// Center at the median and scale by the interquartile range of the encoded
// domain; attributes with fewer than 4 values or zero spread keep the defaults.
inline OracleScales fit_oracle_scales(const std::vector<const AttributeVector*>& sources) {
  OracleScales out;
  for (Attribute a : kContinuousAttributes) {
    const OracleScale base = oracle_scale(a);
    std::vector<double> g;
    for (const AttributeVector* av : sources) {
      const auto x = av->continuous(a);
      if (!x || (base.log_domain && *x <= 0.0)) continue;
      g.push_back(base.log_domain ? std::log(*x) : *x);
    }
    if (g.size() < 4) continue;
    std::sort(g.begin(), g.end());
    auto q = [&](double p) {
      const double pos = p * static_cast<double>(g.size() - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, g.size() - 1);
      return g[lo] + (pos - static_cast<double>(lo)) * (g[hi] - g[lo]);
    };
    const double iqr = q(0.75) - q(0.25);
    if (!(iqr > 0.0)) continue;
    out[a] = {q(0.5), iqr, base.log_domain};
  }
  return out;
}

namespace detail {

inline std::vector<double> hashed_unit(const std::string& s, std::size_t n) {
  Rng rng(fnv1a(s));
  std::vector<double> v(n);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline void put_block(std::vector<double>& u, Attribute a, const std::vector<double>& b) {
  const std::size_t off = OracleLayout::offset(a);
  for (std::size_t i = 0; i < b.size(); ++i) u[off + i] = b[i];
}

inline std::vector<double> discrete_block(Attribute a, const std::string& category) {
  switch (a) {
    case Attribute::gender: {
      const Gender g = parse_gender(category);
      return {g == Gender::male ? 1.0 : 0.0, g == Gender::female ? 1.0 : 0.0};
    }
    case Attribute::language: {
      std::vector<double> v(OracleLayout::kLanguageDim, 0.0);
      for (std::size_t i = 0; i < kLanguages.size(); ++i)
        if (language_name(kLanguages[i]) == category) v[i] = 1.0;
      return v;
    }
    default:
      return hashed_unit(std::string(attribute_id(a)) + "=" + category,
                         OracleLayout::width(a));
  }
}

inline void layer_norm_inplace(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double inv = 1.0 / std::sqrt(var + 1e-10);
  for (double& x : v) x = (x - mean) * inv;
}

}  // namespace detail

// Every block has unit norm; missing values take a fixed placeholder.
inline std::vector<double> oracle_semantic(const AttributeVector& av,
                                           const OracleScales& fitted = {}) {
  std::vector<double> u(OracleLayout::kSemanticDim, 0.0);
  for (Attribute a : kContinuousAttributes) {
    const auto x = av.continuous(a);
    const bool ok = x && (!oracle_scale(a).log_domain || *x > 0.0);
    const double phi = ok ? oracle_angle(a, *x, fitted) : 0.0;
    detail::put_block(u, a, {std::sin(phi), std::cos(phi)});
  }
  for (Attribute a : {Attribute::gender, Attribute::language, Attribute::emotion,
                      Attribute::transcription}) {
    const auto d = av.discrete(a);
    detail::put_block(u, a, detail::discrete_block(a, d && !d->empty() ? *d : "<none>"));
  }
  return u;
}

// Direction in semantic space that a single cue label points to.
inline std::vector<double> oracle_cue_direction(const CueLabel& l) {
  std::vector<double> d(OracleLayout::kSemanticDim, 0.0);
  const Attribute a = l.attribute;
  if (l.kind == CueKind::independent) {
    const auto names = default_independent_names(a);
    const auto it = std::find(names.begin(), names.end(), l.category);
    if (it == names.end())
      throw Error("oracle: unknown independent category '" + l.category + "'");
    const auto k = static_cast<double>(it - names.begin());
    const double step = names.size() == 3 ? std::numbers::pi / 3.0 : std::numbers::pi / 2.0;
    const double angle = (k - 0.5 * static_cast<double>(names.size() - 1)) * step;
    detail::put_block(d, a, {std::sin(angle), std::cos(angle)});
    return d;
  }
  if (is_continuous(a)) {
    const RelativeNames n = relative_names(a);
    if (l.category == n.above)
      detail::put_block(d, a, {1.0, 0.0});
    else if (l.category == n.below)
      detail::put_block(d, a, {-1.0, 0.0});
    else if (l.category == kSimilar)
      detail::put_block(d, a, {0.0, 1.0});
    else
      throw Error("oracle: unknown relative category '" + l.category + "'");
    return d;
  }
  if (l.category == kSame) {
    const std::size_t w = OracleLayout::width(a);
    detail::put_block(d, a, std::vector<double>(w, 1.0 / std::sqrt(static_cast<double>(w))));
    return d;
  }
  detail::put_block(d, a, detail::discrete_block(a, l.category));
  return d;
}

struct OracleConfig {
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  OracleScales scales;
  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

class OracleProvider : public EmbeddingProvider {
 public:
  explicit OracleProvider(OracleConfig cfg = {}) : cfg_(cfg) {
    require(cfg_.noise_sigma >= 0.0, "embeddings.noise_sigma: must be non-negative");
  }

  std::size_t dim() const override { return OracleLayout::kDim; }

  Embedding embed_audio(const AudioQuery& q) const override {
    if (!q.own) throw Error("oracle provider: no attributes for audio '" + q.key + "'");
    std::vector<double> u = oracle_semantic(*q.own, cfg_.scales);
    if (q.leak_db) {
      if (!q.other) throw Error("oracle provider: no leak attributes for '" + q.key + "'");
      const double g = std::pow(10.0, -*q.leak_db / 20.0);
      const std::vector<double> o = oracle_semantic(*q.other, cfg_.scales);
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += g * o[i];
    }
    Embedding v = mirrored(u);
    add_noise(v, "audio:" + q.key);
    detail::layer_norm_inplace(v);
    return v;
  }

  Embedding embed_text(const TextQuery& q) const override {
    if (!q.prompt) throw Error("oracle provider: no cue metadata for prompt '" + q.key + "'");
    std::vector<double> d(OracleLayout::kSemanticDim, 0.0);
    for (const auto& c : q.prompt->cues) {
      const auto dc = oracle_cue_direction(c);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
    }
    double n = 0.0;
    for (double x : d) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
      for (double& x : d) x /= n;
    Embedding v = mirrored(d);
    add_noise(v, "text:" + q.context + "/" + q.key);
    return v;
  }

 private:
  static Embedding mirrored(const std::vector<double>& u) {
    Embedding v(2 * u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      v[i] = u[i];
      v[u.size() + i] = -u[i];
    }
    return v;
  }

  // Noise norm is about noise_sigma times the clean vector's norm.
  void add_noise(Embedding& v, const std::string& key) const {
    if (cfg_.noise_sigma == 0.0) return;
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double sd = cfg_.noise_sigma * std::sqrt(n2 / static_cast<double>(v.size()));
    Rng rng(derive_seed(cfg_.seed, key));
    for (double& x : v) x += sd * rng.normal();
  }

  OracleConfig cfg_;
};

}  // namespace relcue
