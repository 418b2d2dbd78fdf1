#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "promptprism/evalkit.hpp"
#include "support/oracles.hpp"

using namespace promptprism;

using oracle::Seq;

TEST(Lcs, ExhaustiveUpToLengthEightAgainstSubsequenceSets) {
  // Every pair of sequences of length <= 8 over {0,1,2}.
  const oracle::SubsequenceTable table(8, 3);
  ASSERT_EQ(table.size(), 9841u);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    ASSERT_EQ(table.index_of(table.seq(i)), i);
    for (std::size_t j = i; j < table.size(); ++j) {
      const std::size_t expected = table.lcs(i, j);
      const auto& a = table.seq(i);
      const auto& b = table.seq(j);
      if (lcs_length(a, b) != expected || lcs_length(b, a) != expected) {
        FAIL() << "lcs mismatch at pair " << i << "," << j;
      }
      if (std::abs(rouge_l_tokens(a, b) - oracle::rouge_f1(expected, a.size(), b.size())) > 1e-12) {
        FAIL() << "rouge mismatch at pair " << i << "," << j;
      }
      ++checked;
    }
  }
  EXPECT_EQ(checked, table.size() * (table.size() + 1) / 2);
}

TEST(Lcs, RandomLengthEightAgainstBruteForce) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20000; ++i) {
    Seq a(rng() % 9), b(rng() % 9);
    for (auto& x : a) x = int(rng() % 3);
    for (auto& x : b) x = int(rng() % 3);
    const std::size_t expected = oracle::brute_lcs(a, b);
    ASSERT_EQ(lcs_length(a, b), expected);
    ASSERT_NEAR(rouge_l_tokens(a, b), oracle::rouge_f1(expected, a.size(), b.size()), 1e-12);
  }
}

TEST(Rouge, KnownValues) {
  EXPECT_NEAR(rouge_l("the cat sat", "the cat"), 0.8, 1e-9);
  EXPECT_NEAR(rouge_l("a b c d e", "a b c d f"), 0.8, 1e-12);
  EXPECT_NEAR(rouge_l("the cat sat on the mat", "the cat on the mat"), 10.0 / 11.0, 1e-12);
  EXPECT_DOUBLE_EQ(rouge_l("", ""), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l("", "x"), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("x", ""), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("x y", "z"), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("Hello, World!", "hello world"), 1.0);
}

TEST(Rouge, SymmetricAtBetaOne) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> words = {"a", "b", "c", "d", "the", "The", "x,", "y."};
  for (int i = 0; i < 2000; ++i) {
    std::string r, c;
    for (std::size_t k = rng() % 8; k > 0; --k) r += words[rng() % words.size()] + " ";
    for (std::size_t k = rng() % 8; k > 0; --k) c += words[rng() % words.size()] + " ";
    EXPECT_NEAR(rouge_l(r, c), rouge_l(c, r), 1e-12);
    const double v = rouge_l(r, c);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Rouge, BetaWeightsRecall) {
  // lcs 2, ref 4 tokens, candidate 2 tokens: recall 0.5, precision 1.
  const double b2 = 4.0;
  EXPECT_NEAR(rouge_l("a b c d", "a b", RougeConfig{2.0, true, true}), (1 + b2) * 0.5 / (0.5 + b2), 1e-12);
}

TEST(Rouge, TokenizationAndMultiReference) {
  EXPECT_EQ(rouge_tokens("It's  a Test-case.\n日本 語"),
            (std::vector<std::string>{"it", "s", "a", "test", "case", "日本", "語"}));
  EXPECT_EQ(rouge_tokens("Keep CASE", RougeConfig{1.0, false, false}), (std::vector<std::string>{"Keep", "CASE"}));
  EXPECT_DOUBLE_EQ(rouge_l_multi({"nope", "the answer"}, "The answer"), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l_multi({}, ""), 1.0);
}

TEST(Stats, Descriptive) {
  const auto d = descriptive({1, 2, 3, 4});
  EXPECT_EQ(d.n, 4u);
  EXPECT_DOUBLE_EQ(d.mean, 2.5);
  ASSERT_TRUE(d.std);
  EXPECT_NEAR(*d.std, 1.2910, 5e-5);
  EXPECT_FALSE(descriptive({7}).std.has_value());
  try {
    descriptive({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptySample);
  }
}

TEST(Stats, RelativeChange) {
  EXPECT_NEAR(relative_change(56.49, 63.37), (63.37 - 56.49) / 56.49, 1e-12);
  EXPECT_EQ(format_percent(relative_change(56.49, 63.37)), "+12%");
  EXPECT_EQ(format_percent(-0.031), "-3%");
  EXPECT_EQ(format_percent(0.004), "0%");
  EXPECT_EQ(format_percent(-0.004), "0%");
  try {
    relative_change(0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroBaseline);
  }
}

TEST(Anova, HandComputedFAndClosedFormP) {
  const auto r = one_way_anova({{1, 2}, {3, 4}});
  EXPECT_NEAR(r.f_stat, 8.0, 1e-12);
  EXPECT_EQ(r.df_between, 1u);
  EXPECT_EQ(r.df_within, 2u);
  // F(1, 2) is the square of Student t with 2 df: p = 1 - t / sqrt(t^2 + 2).
  const double t = std::sqrt(8.0);
  EXPECT_NEAR(r.p_value, 1.0 - t / std::sqrt(t * t + 2.0), 1e-9);
  EXPECT_FALSE(r.significant);
}

TEST(Anova, DegenerateGroups) {
  const auto equal = one_way_anova({{1, 2, 3}, {1, 2, 3}, {3, 2, 1}});
  EXPECT_DOUBLE_EQ(equal.f_stat, 0.0);
  EXPECT_DOUBLE_EQ(equal.p_value, 1.0);
  const auto constant = one_way_anova({{100, 100}, {100, 100}});
  EXPECT_DOUBLE_EQ(constant.f_stat, 0.0);
  const auto separated = one_way_anova({{1, 1}, {2, 2}});
  EXPECT_TRUE(separated.f_infinite());
  EXPECT_DOUBLE_EQ(separated.p_value, 0.0);
  EXPECT_TRUE(separated.significant);
}

TEST(Anova, Errors) {
  auto code = [](const std::vector<std::vector<double>>& g) {
    try {
      one_way_anova(g);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidConfig;
  };
  EXPECT_EQ(code({{1, 2, 3}}), Errc::InsufficientGroups);
  EXPECT_EQ(code({{1, 2}, {3}}), Errc::InsufficientSamples);
}

TEST(Anova, MatchesTextbookFOnRandomData) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(50, 10);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::vector<double>> groups(2 + rng() % 4);
    for (auto& g : groups) {
      g.resize(2 + rng() % 10);
      for (auto& x : g) x = noise(rng);
    }
    EXPECT_NEAR(one_way_anova(groups).f_stat, oracle::anova_f(groups), 1e-8 * oracle::anova_f(groups) + 1e-10);
  }
}

TEST(Anova, PValueAgreesWithPermutationTest) {
  const auto fixtures = oracle::permutation_fixtures();
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const auto r = one_way_anova(fixtures[i]);
    const double perm = oracle::permutation_p(fixtures[i], 100000, 99 + i);
    EXPECT_NEAR(r.p_value, perm, 0.02) << "fixture " << i << " F=" << r.f_stat;
  }
}
