#pragma once

// Scoring and statistics: ROUGE-L, mean/std, relative change, one-way ANOVA.

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptprism/errors.hpp"
#include "promptprism/unicode.hpp"

namespace promptprism {

struct RougeConfig {
  double beta = 1.0;
  bool lowercase = true;
  bool strip_punctuation = true;
};

/// Lowercases ASCII letters, turns ASCII punctuation into spaces and splits
/// on Unicode whitespace.
inline std::vector<std::string> rouge_tokens(std::string_view text, const RougeConfig& cfg = {}) {
  std::string norm = cfg.lowercase ? unicode::ascii_lower(text) : std::string(text);
  if (cfg.strip_punctuation) {
    for (char& c : norm) {
      const auto u = static_cast<unsigned char>(c);
      if (u < 0x80 && std::ispunct(u)) c = ' ';
    }
  }
  std::vector<std::string> out;
  std::string cur;
  std::size_t pos = 0;
  while (pos < norm.size()) {
    const std::size_t start = pos;
    const char32_t cp = unicode::decode_one(norm, pos);
    if (unicode::is_space(cp)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.append(norm, start, pos - start);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

template <class T>
std::size_t lcs_length(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

/// F-measure from an LCS length. Two empty sequences score 1; one empty
/// sequence scores 0.
inline double rouge_l_from_lcs(std::size_t lcs, std::size_t ref_len, std::size_t cand_len, double beta = 1.0) {
  if (ref_len == 0 && cand_len == 0) return 1.0;
  if (ref_len == 0 || cand_len == 0 || lcs == 0) return 0.0;
  const double r = double(lcs) / double(ref_len);
  const double p = double(lcs) / double(cand_len);
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

template <class T>
double rouge_l_tokens(const std::vector<T>& reference, const std::vector<T>& candidate, double beta = 1.0) {
  return rouge_l_from_lcs(lcs_length(reference, candidate), reference.size(), candidate.size(), beta);
}

inline double rouge_l(std::string_view reference, std::string_view candidate, const RougeConfig& cfg = {}) {
  return rouge_l_tokens(rouge_tokens(reference, cfg), rouge_tokens(candidate, cfg), cfg.beta);
}

/// Best score over several acceptable references.
inline double rouge_l_multi(const std::vector<std::string>& references, std::string_view candidate,
                            const RougeConfig& cfg = {}) {
  if (references.empty()) return rouge_l("", candidate, cfg);
  const auto cand = rouge_tokens(candidate, cfg);
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, rouge_l_tokens(rouge_tokens(r, cfg), cand, cfg.beta));
  return best;
}

struct Descriptive {
  std::size_t n = 0;
  double mean = 0;
  std::optional<double> std;  // sample (n-1) estimator; absent for n = 1
};

inline Descriptive descriptive(const std::vector<double>& xs) {
  if (xs.empty()) throw Error(Errc::EmptySample, "cannot describe an empty sample");
  Descriptive d;
  d.n = xs.size();
  double sum = 0;
  for (double x : xs) sum += x;
  d.mean = sum / double(d.n);
  if (d.n >= 2) {
    double ss = 0;
    for (double x : xs) ss += (x - d.mean) * (x - d.mean);
    d.std = std::sqrt(ss / double(d.n - 1));
  }
  return d;
}

inline double relative_change(double baseline, double variant) {
  if (baseline == 0.0) throw Error(Errc::ZeroBaseline, "relative change against a zero baseline");
  return (variant - baseline) / baseline;
}

/// Signed whole percent, e.g. "+12%", "-3%", "0%".
inline std::string format_percent(double fraction) {
  long v = std::lround(fraction * 100.0);
  if (v == 0) return "0%";
  return (v > 0 ? "+" : "") + std::to_string(v) + "%";
}

struct AnovaResult {
  double f_stat = 0;  // +inf when all within-group variance is zero
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double p_value = 1;
  bool significant = false;
  double alpha = 0.05;

  bool f_infinite() const { return std::isinf(f_stat); }
};

/// One-way ANOVA F statistic on raw groups; no validation.
inline double anova_f(const std::vector<std::vector<double>>& groups) {
  std::size_t n = 0;
  double total = 0;
  for (const auto& g : groups) {
    n += g.size();
    for (double x : g) total += x;
  }
  const double grand = total / double(n);
  double ssb = 0;
  double ssw = 0;
  for (const auto& g : groups) {
    double s = 0;
    for (double x : g) s += x;
    const double m = s / double(g.size());
    ssb += double(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double dfb = double(groups.size() - 1);
  const double dfw = double(n - groups.size());
  // Tolerances absorb rounding in sums of identical values.
  const double scale = std::max(1.0, std::abs(grand)) * std::max(1.0, std::abs(grand)) * double(n);
  if (ssb <= 1e-24 * scale) return 0.0;
  if (ssw <= 1e-24 * scale) return std::numeric_limits<double>::infinity();
  return (ssb / dfb) / (ssw / dfw);
}

inline AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups, double alpha = 0.05) {
  if (groups.size() < 2) throw Error(Errc::InsufficientGroups, "ANOVA needs at least two groups");
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error(Errc::InsufficientSamples, "every ANOVA group needs at least two samples");
    n += g.size();
  }
  AnovaResult r;
  r.alpha = alpha;
  r.df_between = groups.size() - 1;
  r.df_within = n - groups.size();
  r.f_stat = anova_f(groups);
  if (std::isinf(r.f_stat)) {
    r.p_value = 0.0;
  } else if (r.f_stat <= 0.0) {
    r.p_value = 1.0;
  } else {
    const boost::math::fisher_f dist(double(r.df_between), double(r.df_within));
    r.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, r.f_stat)), 0.0, 1.0);
  }
  r.significant = r.p_value < alpha;
  return r;
}

}  // namespace promptprism
