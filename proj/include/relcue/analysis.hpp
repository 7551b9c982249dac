#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "relcue/cues.hpp"
#include "relcue/error.hpp"
#include "relcue/prompts.hpp"
#include "relcue/rng.hpp"

namespace relcue {

struct EvalRow {
  std::string mixture_id;
  std::string cue;  // attribute id, or the config name for multi-cue prompts
  CueKind kind = CueKind::relative;
  PromptConfig config = PromptConfig::individual;
  std::string category;
  int true_label = 0;
  int pred_label = 0;
  double prob = 0.5;
  std::optional<double> si_sdr;   // chosen channel vs target
  std::optional<double> si_sdri;  // chosen channel vs mixture baseline
  std::optional<double> delta;    // relative attribute difference
  std::optional<double> value_tar, value_inf;
  std::optional<std::string> ind_tar, ind_inf;  // independent categories

  bool correct() const { return true_label == pred_label; }
  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct Wilson {
  double lo = 0.0;
  double hi = 1.0;
};

inline Wilson wilson_interval(std::size_t correct, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(correct) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct CueAccuracy {
  std::string config;
  std::string kind;
  std::string cue;
  std::size_t n = 0;
  std::size_t correct = 0;
  double acc = 0.0;
  Wilson ci;
  std::optional<double> mean_si_sdri;
};

inline std::vector<CueAccuracy> accuracy_by_cue(const std::vector<EvalRow>& rows) {
  require(!rows.empty(), "accuracy_by_cue: no rows");
  struct Acc {
    std::size_t n = 0, ok = 0, n_sdr = 0;
    double sdr = 0.0;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Acc> groups;
  for (const auto& r : rows) {
    Acc& a = groups[{std::string(prompt_config_name(r.config)), std::string(cue_kind_name(r.kind)),
                     r.cue}];
    ++a.n;
    a.ok += r.correct();
    if (r.si_sdri) {
      ++a.n_sdr;
      a.sdr += *r.si_sdri;
    }
  }
  std::vector<CueAccuracy> out;
  for (const auto& [k, a] : groups) {
    CueAccuracy c{std::get<0>(k), std::get<1>(k), std::get<2>(k), a.n, a.ok,
                  static_cast<double>(a.ok) / static_cast<double>(a.n),
                  wilson_interval(a.ok, a.n), std::nullopt};
    if (a.n_sdr > 0) c.mean_si_sdri = a.sdr / static_cast<double>(a.n_sdr);
    out.push_back(c);
  }
  return out;
}

struct LogisticFit {
  double intercept = 0.0;
  double slope = 0.0;
  std::size_t iterations = 0;
};

// Maximum likelihood with a small ridge so separable data stays finite.
inline LogisticFit logistic_fit_1d(const std::vector<std::pair<double, int>>& pts,
                                   double ridge = 1e-6, std::size_t max_iter = 100,
                                   double tol = 1e-8) {
  require(pts.size() >= 2, "logistic_fit_1d: need at least two points");
  std::size_t pos = 0;
  for (const auto& [x, y] : pts) {
    require(std::isfinite(x), "logistic_fit_1d: non-finite input");
    pos += y == 1;
  }
  require(pos > 0 && pos < pts.size(), "logistic_fit_1d: both classes must be present");

  // Sorting makes the summation order, and so the result, independent of
  // the input order.
  std::vector<std::pair<double, int>> sorted(pts);
  std::sort(sorted.begin(), sorted.end());
  auto objective = [&](double b0, double b1) {
    double nll = 0.5 * ridge * (b0 * b0 + b1 * b1);
    for (const auto& [x, y] : sorted) {
      const double eta = b0 + b1 * x;
      const double l = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      nll += l - y * eta;
    }
    return nll;
  };
  LogisticFit f;
  double cur = objective(0.0, 0.0);
  for (f.iterations = 0; f.iterations < max_iter; ++f.iterations) {
    double g0 = ridge * f.intercept, g1 = ridge * f.slope;
    double h00 = ridge, h01 = 0.0, h11 = ridge;
    for (const auto& [x, y] : sorted) {
      const double p = 1.0 / (1.0 + std::exp(-(f.intercept + f.slope * x)));
      const double w = p * (1.0 - p);
      g0 += p - y;
      g1 += (p - y) * x;
      h00 += w;
      h01 += w * x;
      h11 += w * x * x;
    }
    if (std::hypot(g0, g1) < tol) break;
    const double det = h00 * h11 - h01 * h01;
    require(det > 0.0, "logistic_fit_1d: singular Hessian");
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    double step = 1.0;
    for (int k = 0; k < 50; ++k, step *= 0.5) {
      const double n0 = f.intercept - step * d0, n1 = f.slope - step * d1;
      const double val = objective(n0, n1);
      if (val <= cur) {
        f.intercept = n0;
        f.slope = n1;
        cur = val;
        break;
      }
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Same / adjacent / distinct x similar / non-similar.

enum class IndependentGroup { same, adjacent, distinct };

inline std::string_view independent_group_name(IndependentGroup g) {
  switch (g) {
    case IndependentGroup::same: return "same";
    case IndependentGroup::adjacent: return "adjacent";
    case IndependentGroup::distinct: return "distinct";
  }
  return "";
}

// Adjacent only exists with three bins.
inline IndependentGroup independent_group(const IndependentQuantizer& q, double a, double b) {
  const std::size_t ba = q.bin(a), bb = q.bin(b);
  if (ba == bb) return IndependentGroup::same;
  const std::size_t gap = ba > bb ? ba - bb : bb - ba;
  if (q.bins() == 3 && gap == 1) return IndependentGroup::adjacent;
  return IndependentGroup::distinct;
}

struct CrosstabCell {
  std::string cue;
  std::string independent;  // same | adjacent | distinct | all
  std::string relative;     // similar | non-similar | all
  std::size_t n = 0;
  std::size_t correct = 0;
  double acc() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

// Uses individual relative-cue rows of continuous quantized attributes.
inline std::vector<CrosstabCell> group_crosstab(const std::vector<EvalRow>& rows,
                                                const QuantizerSet& quantizers,
                                                const ThresholdTable& thresholds) {
  std::vector<CrosstabCell> out;
  for (const auto& [attr, q] : quantizers) {
    const std::string cue(attribute_id(attr));
    std::vector<std::string> ind{"same"};
    if (q.bins() == 3) ind.push_back("adjacent");
    ind.push_back("distinct");
    ind.push_back("all");
    const std::vector<std::string> rel{"similar", "non-similar", "all"};
    std::map<std::pair<std::string, std::string>, CrosstabCell> cells;
    for (const auto& i : ind)
      for (const auto& r : rel) cells[{i, r}] = {cue, i, r, 0, 0};
    for (const auto& row : rows) {
      if (row.config != PromptConfig::individual || row.kind != CueKind::relative ||
          row.cue != cue || !row.value_tar || !row.value_inf)
        continue;
      const std::string ig(independent_group_name(independent_group(q, *row.value_tar, *row.value_inf)));
      const Threshold& t = thresholds.at(attr);
      const double d = attribute_delta(t, *row.value_tar, *row.value_inf);
      const std::string rg = std::abs(d) <= t.theta ? "similar" : "non-similar";
      for (const std::string* i : std::array<const std::string*, 2>{&ig, &ind.back()})
        for (const std::string* r : std::array<const std::string*, 2>{&rg, &rel.back()}) {
          auto& c = cells[{*i, *r}];
          ++c.n;
          c.correct += row.correct();
        }
    }
    for (const auto& i : ind)
      for (const auto& r : rel) out.push_back(cells[{i, r}]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  friend bool operator==(const Table&, const Table&) = default;
};

inline std::string fmt_num(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& x, int digits = 6) {
  return x ? fmt_num(*x, digits) : std::string();
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i) out += ',';
      out += detail::csv_field(f[i]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

inline Table parse_csv(const std::string& name, const std::string& text) {
  Table t{name, {}, {}};
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> cur;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      cur.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\n') {
      cur.push_back(field);
      lines.push_back(cur);
      cur.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any) {
    cur.push_back(field);
    lines.push_back(cur);
  }
  require(!lines.empty(), "csv " + name + ": missing header");
  t.header = lines.front();
  t.rows.assign(lines.begin() + 1, lines.end());
  return t;
}

inline Table accuracy_table(const std::vector<CueAccuracy>& acc) {
  Table t{"accuracy_by_cue",
          {"config", "kind", "cue", "n", "correct", "acc", "ci_lo", "ci_hi", "mean_si_sdri"},
          {}};
  for (const auto& a : acc)
    t.rows.push_back({a.config, a.kind, a.cue, std::to_string(a.n), std::to_string(a.correct),
                      fmt_num(a.acc), fmt_num(a.ci.lo), fmt_num(a.ci.hi),
                      fmt_opt(a.mean_si_sdri)});
  return t;
}

inline Table crosstab_table(const std::vector<CrosstabCell>& cells) {
  Table t{"group_crosstab",
          {"cue", "independent", "relative", "n", "correct", "acc", "ci_lo", "ci_hi"},
          {}};
  for (const auto& c : cells) {
    const Wilson w = wilson_interval(c.correct, c.n);
    t.rows.push_back({c.cue, c.independent, c.relative, std::to_string(c.n),
                      std::to_string(c.correct), fmt_num(c.acc()), fmt_num(w.lo),
                      fmt_num(w.hi)});
  }
  return t;
}

// Per continuous cue: logistic fit of correctness on |delta| and a binned
// empirical curve with the fitted curve alongside.
struct CueCurve {
  std::string cue;
  std::optional<LogisticFit> fit;
  std::size_t n = 0;
  std::vector<std::array<double, 4>> points;  // x, empirical acc, count, fitted
};

inline std::vector<CueCurve> accuracy_curves(const std::vector<EvalRow>& rows,
                                             std::size_t bins = 10) {
  std::map<std::string, std::vector<std::pair<double, int>>> by_cue;
  for (const auto& r : rows)
    if (r.config == PromptConfig::individual && r.kind == CueKind::relative && r.delta &&
        r.category != kSimilar)
      by_cue[r.cue].push_back({std::abs(*r.delta), r.correct() ? 1 : 0});
  std::vector<CueCurve> out;
  for (auto& [cue, pts] : by_cue) {
    CueCurve c;
    c.cue = cue;
    c.n = pts.size();
    std::size_t pos = 0;
    for (const auto& p : pts) pos += p.second;
    if (pts.size() >= 2 && pos > 0 && pos < pts.size()) c.fit = logistic_fit_1d(pts);
    std::sort(pts.begin(), pts.end());
    const std::size_t nb = std::min(bins, pts.size());
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t lo = b * pts.size() / nb, hi = (b + 1) * pts.size() / nb;
      if (hi <= lo) continue;
      double sx = 0.0, sy = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        sx += pts[i].first;
        sy += pts[i].second;
      }
      const double cnt = static_cast<double>(hi - lo);
      const double x = sx / cnt;
      const double fitted =
          c.fit ? 1.0 / (1.0 + std::exp(-(c.fit->intercept + c.fit->slope * x))) : 0.0;
      c.points.push_back({x, sy / cnt, cnt, fitted});
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline Table logistic_table(const std::vector<CueCurve>& curves) {
  Table t{"logistic_fit", {"cue", "n", "intercept", "slope"}, {}};
  for (const auto& c : curves)
    t.rows.push_back({c.cue, std::to_string(c.n), c.fit ? fmt_num(c.fit->intercept) : "",
                      c.fit ? fmt_num(c.fit->slope) : ""});
  return t;
}

inline Table curve_table(const CueCurve& c) {
  Table t{"curve_" + c.cue, {"abs_delta", "acc", "count", "fitted"}, {}};
  for (const auto& p : c.points)
    t.rows.push_back({fmt_num(p[0]), fmt_num(p[1]), std::to_string(static_cast<long>(p[2])),
                      fmt_num(p[3])});
  return t;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Provenance {
  std::string dataset_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// One CSV per table plus manifest.json listing provenance and files.
inline void export_report(const std::vector<Table>& tables, const Provenance& prov,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string files;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto path = dir / (tables[i].name + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write report file " + path.string());
    out << to_csv(tables[i]);
    files += std::string(i ? ", " : "") + "\"" + tables[i].name + ".csv\"";
  }
  std::ofstream m(dir / "manifest.json", std::ios::binary);
  if (!m) throw Error("cannot write report manifest in " + dir.string());
  m << "{\n  \"config_hash\": \"" << prov.config_hash << "\",\n  \"dataset_hash\": \""
    << prov.dataset_hash << "\",\n  \"files\": [" << files << "],\n  \"seed\": " << prov.seed
    << "\n}\n";
}

}  // namespace relcue
