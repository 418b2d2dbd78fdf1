#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner. None of these call into the library under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Seq = std::vector<int>;

/// Every sequence of length <= max_len over `symbols` letters, shortest first,
/// lexicographic within a length.
inline std::vector<Seq> all_sequences(std::size_t max_len, int symbols) {
  std::vector<Seq> out = {{}};
  std::vector<Seq> frontier = {{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Seq> next;
    for (const auto& s : frontier) {
      for (int c = 0; c < symbols; ++c) {
        auto t = s;
        t.push_back(c);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

inline bool is_subsequence(const Seq& sub, const Seq& of) {
  std::size_t j = 0;
  for (int x : of) {
    if (j < sub.size() && sub[j] == x) ++j;
  }
  return j == sub.size();
}

/// Longest common subsequence by trying every subsequence of `a`.
inline std::size_t brute_lcs(const Seq& a, const Seq& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    Seq sub;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(a[i]);
    }
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline double rouge_f1(std::size_t lcs, std::size_t ref, std::size_t cand) {
  if (ref == 0 && cand == 0) return 1.0;
  if (lcs == 0) return 0.0;
  return 2.0 * double(lcs) / double(ref + cand);  // beta = 1 harmonic mean
}

/// LCS for every pair drawn from all_sequences(max_len, symbols). Each
/// sequence stores the set of its subsequences as a bitset; the LCS of a
/// pair is the longest subsequence of one found in the other's set.
class SubsequenceTable {
 public:
  SubsequenceTable(std::size_t max_len, int symbols) : symbols_(symbols), seqs_(all_sequences(max_len, symbols)) {
    offset_.assign(max_len + 2, 0);
    std::size_t width = 1;
    for (std::size_t len = 1; len <= max_len + 1; ++len) {
      offset_[len] = offset_[len - 1] + width;
      width *= static_cast<std::size_t>(symbols);
    }
    words_ = (seqs_.size() + 63) / 64;
    bits_.assign(seqs_.size() * words_, 0);
    subs_.resize(seqs_.size());
    for (std::size_t i = 0; i < seqs_.size(); ++i) {
      const auto& a = seqs_[i];
      std::set<std::pair<std::size_t, std::size_t>, std::greater<>> distinct;
      for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        Seq sub;
        for (std::size_t k = 0; k < a.size(); ++k) {
          if (mask & (1u << k)) sub.push_back(a[k]);
        }
        const std::size_t idx = index_of(sub);
        bits_[i * words_ + idx / 64] |= std::uint64_t{1} << (idx % 64);
        distinct.emplace(sub.size(), idx);
      }
      subs_[i].assign(distinct.begin(), distinct.end());
    }
  }

  std::size_t size() const { return seqs_.size(); }
  const Seq& seq(std::size_t i) const { return seqs_[i]; }

  std::size_t index_of(const Seq& s) const {
    std::size_t v = 0;
    for (int x : s) v = v * static_cast<std::size_t>(symbols_) + static_cast<std::size_t>(x);
    return offset_[s.size()] + v;
  }

  std::size_t lcs(std::size_t i, std::size_t j) const {
    const std::uint64_t* in_b = &bits_[j * words_];
    for (const auto& [len, idx] : subs_[i]) {
      if (in_b[idx / 64] & (std::uint64_t{1} << (idx % 64))) return len;
    }
    return 0;
  }

 private:
  int symbols_;
  std::vector<Seq> seqs_;
  std::vector<std::size_t> offset_;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> subs_;  // (length, index), longest first
};

/// Textbook one-way ANOVA F via total and within sums of squares.
inline double anova_f(const std::vector<std::vector<double>>& groups) {
  std::vector<double> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  double grand = 0;
  for (double x : all) grand += x;
  grand /= double(all.size());
  double sst = 0;
  for (double x : all) sst += (x - grand) * (x - grand);
  double ssw = 0;
  for (const auto& g : groups) {
    double m = 0;
    for (double x : g) m += x;
    m /= double(g.size());
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double ssb = sst - ssw;
  return (ssb / double(groups.size() - 1)) / (ssw / double(all.size() - groups.size()));
}

/// Share of random relabellings whose F is at least the observed one.
inline double permutation_p(const std::vector<std::vector<double>>& groups, std::size_t rounds, std::uint64_t seed) {
  const double observed = anova_f(groups);
  std::vector<double> pool;
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) {
    pool.insert(pool.end(), g.begin(), g.end());
    sizes.push_back(g.size());
  }
  std::mt19937_64 rng(seed);
  std::size_t extreme = 0;
  std::vector<std::vector<double>> shuffled(groups.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    std::shuffle(pool.begin(), pool.end(), rng);
    std::size_t at = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      shuffled[g].assign(pool.begin() + static_cast<std::ptrdiff_t>(at),
                         pool.begin() + static_cast<std::ptrdiff_t>(at + sizes[g]));
      at += sizes[g];
    }
    if (anova_f(shuffled) >= observed - 1e-12) ++extreme;
  }
  return double(extreme) / double(rounds);
}

/// The five small fixtures used for the permutation comparison.
inline std::vector<std::vector<std::vector<double>>> permutation_fixtures() {
  std::mt19937_64 rng(2024);
  std::vector<std::vector<std::vector<double>>> out;
  for (int fixture = 0; fixture < 5; ++fixture) {
    std::normal_distribution<double> noise(0, 1);
    std::vector<std::vector<double>> groups(3, std::vector<double>(15));
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (auto& x : groups[g]) x = noise(rng) + 0.3 * double(g) * double(fixture % 3);
    }
    out.push_back(std::move(groups));
  }
  return out;
}

using Item = std::pair<std::string, std::string>;  // tag, content

inline bool in_category(const std::string& tag, const std::string& cat) {
  return tag == cat || tag.rfind(cat + ":", 0) == 0;
}

/// Expected component order after moving category `cat` to `pos`.
inline std::vector<Item> reorder(const std::vector<Item>& doc, const std::string& cat, const std::string& pos) {
  std::vector<Item> rel, oth;
  for (const auto& it : doc) (in_category(it.first, cat) ? rel : oth).push_back(it);
  std::vector<Item> out;
  if (pos == "first") {
    out = rel;
    out.insert(out.end(), oth.begin(), oth.end());
  } else if (pos == "last") {
    out = oth;
    out.insert(out.end(), rel.begin(), rel.end());
  } else {
    const std::size_t half = oth.size() / 2;
    out.assign(oth.begin(), oth.begin() + static_cast<std::ptrdiff_t>(half));
    out.insert(out.end(), rel.begin(), rel.end());
    out.insert(out.end(), oth.begin() + static_cast<std::ptrdiff_t>(half), oth.end());
  }
  return out;
}

struct Tree {
  std::size_t depth = 0;
  std::size_t width = 0;
  std::size_t nodes = 0;
  bool operator==(const Tree&) const = default;
};

/// Tree shape from colon-joined tag names, counting every ancestor prefix.
inline Tree tag_tree(const std::vector<std::string>& names) {
  std::set<std::string> nodes;
  for (const auto& n : names) {
    for (std::size_t i = 0; i <= n.size(); ++i) {
      if (i == n.size() || n[i] == ':') nodes.insert(n.substr(0, i));
    }
  }
  Tree t;
  t.nodes = nodes.size();
  std::map<std::size_t, std::size_t> level;
  for (const auto& n : nodes) {
    const std::size_t d = 1 + static_cast<std::size_t>(std::count(n.begin(), n.end(), ':'));
    ++level[d];
    t.depth = std::max(t.depth, d);
  }
  for (const auto& [d, c] : level) t.width = std::max(t.width, c);
  return t;
}

}  // namespace oracle
