#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "promptprism/dataset.hpp"
#include "promptprism/profiler.hpp"
#include "support/oracles.hpp"
#include "support/random_prompts.hpp"

using namespace promptprism;

namespace {

const TagRegistry& reg() {
  static const TagRegistry r = TagRegistry::builtin();
  return r;
}

ProfileOptions opts() {
  ProfileOptions o;
  o.registry_fingerprint = reg().fingerprint();
  return o;
}

DatasetProfile profile_of(const Prompt& p, const RecordLabels& labels = {}) {
  return profile_record(parse_annotated(p, reg()), opts(), labels);
}

std::set<TagPath> tags(std::initializer_list<const char*> names) {
  std::set<TagPath> out;
  for (auto n : names) out.insert(TagPath::parse(n));
  return out;
}

TreeMetrics oracle_tree(const std::vector<std::string>& names) {
  const auto t = oracle::tag_tree(names);
  return TreeMetrics{t.depth, t.width, t.nodes};
}

std::vector<DatasetProfile> synthetic_profiles(std::size_t n, std::uint64_t seed) {
  testsupport::Gen gen(seed);
  static const std::vector<std::string> task_types = {"Classification:Sentiment Analysis", "Closed Book QA:Factual QA", "not a type"};
  std::vector<DatasetProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    RecordLabels labels;
    if (gen.chance(0.7)) labels.task_type = gen.pick(task_types);
    if (gen.chance(0.5)) labels.language = gen.chance(0.5) ? "en" : "de";
    out.push_back(profile_record(annotate_markers(parse_annotated(gen.prompt(4, 5), reg())), opts(), labels));
  }
  return out;
}

DatasetProfile fold(const std::vector<DatasetProfile>& ps, std::size_t begin, std::size_t end) {
  DatasetProfile acc;
  for (std::size_t i = begin; i < end; ++i) acc = merge(std::move(acc), ps[i]);
  return acc;
}

}  // namespace

TEST(TreeMetrics, Goldens) {
  EXPECT_EQ(tree_metrics({}), (TreeMetrics{0, 0, 0}));
  EXPECT_EQ(tree_metrics(tags({"request_query"})), (TreeMetrics{1, 1, 1}));
  EXPECT_EQ(tree_metrics(tags({"instruction:guideline:cot", "instruction:task", "request_query"})),
            (TreeMetrics{3, 2, 5}));
  EXPECT_EQ(tree_metrics(tags({"instruction", "instruction:task"})), (TreeMetrics{2, 1, 2}));
  EXPECT_EQ(tree_metrics(tags({"tools:tool_name", "tools:parameters", "tools:tool_description", "tools_prompt"})),
            (TreeMetrics{2, 3, 5}));
}

TEST(TreeMetrics, MatchesStringOracle) {
  const auto all = reg().paths();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    std::set<TagPath> chosen;
    std::vector<std::string> names;
    const std::size_t k = rng() % 8;
    for (std::size_t j = 0; j < k; ++j) {
      const auto& t = all[rng() % all.size()];
      chosen.insert(t);
      names.push_back(t.str());
    }
    EXPECT_EQ(tree_metrics(chosen), oracle_tree(names));
  }
}

TEST(ProfileRecord, SingleTurnExample) {
  const Prompt p{{{"system", "<instruction:guideline:role>You are a helpful assistant.</instruction:guideline:role>"},
                  {"user", "<instruction:task>Classify the tweet:</instruction:task>\n\n"
                           "<request_query>I love it @bob #win</request_query>"}},
                 std::nullopt};
  const auto prof = profile_of(p, RecordLabels{"Classification:Sentiment Analysis", std::nullopt});
  EXPECT_EQ(prof.record_count, 1u);
  EXPECT_EQ(prof.structural.turn_type, (Counter{{"single", 1}}));
  EXPECT_EQ(prof.structural.role_sequence_pattern, (Counter{{"system→user", 1}}));
  EXPECT_EQ(prof.structural.unique_roles, (std::set<std::string>{"system", "user"}));
  EXPECT_EQ(prof.semantic.tag_frequency,
            (Counter{{"instruction:guideline:role", 1}, {"instruction:task", 1}, {"request_query", 1}}));
  // nodes: instruction, instruction:guideline, instruction:guideline:role, instruction:task, request_query
  EXPECT_EQ(prof.semantic.depth_sum, 3u);
  EXPECT_EQ(prof.semantic.width_sum, 2u);
  EXPECT_EQ(prof.semantic.node_sum, 5u);
  EXPECT_EQ(prof.syntactic.delimiter, (Counter{{"double_newline", 1}, {"none", 2}}));
  EXPECT_EQ(prof.syntactic.suffix, (Counter{{"colon_end", 1}, {"none", 1}, {"sentence_end", 1}}));
  EXPECT_EQ(prof.syntactic.special_tokens, (Counter{{"hashtag", 1}, {"mention", 1}, {"none", 2}}));
  EXPECT_EQ(prof.metadata.task_type, (Counter{{"Classification:Sentiment Analysis", 1}}));
  EXPECT_EQ(prof.metadata.language, (Counter{{"und", 1}}));
  // "You are a helpful assistant." + "Classify the tweet:" + "I love it @bob #win"
  EXPECT_EQ(prof.metadata.token_lengths, (std::map<std::uint64_t, std::uint64_t>{{5 + 3 + 5, 1}}));
  EXPECT_TRUE(prof.warning_counts.empty());
}

TEST(ProfileRecord, MultiTurnUsesLastUserMessageAndHistory) {
  const Prompt p{{{"user", "<request_query>first</request_query>"},
                  {"assistant", "<response:answer>ok</response:answer>"},
                  {"user", "<request_query>second</request_query>"}},
                 std::nullopt};
  const auto prof = profile_of(p);
  EXPECT_EQ(prof.structural.turn_type, (Counter{{"multi", 1}}));
  EXPECT_EQ(prof.structural.role_sequence_pattern, (Counter{{"user→assistant→user", 1}}));
  EXPECT_EQ(prof.structural.user_turns, 2u);
  EXPECT_EQ(prof.semantic.tag_frequency, (Counter{{"historical_context", 1}, {"request_query", 1}}));
  EXPECT_EQ(prof.semantic.node_sum, 2u);
  EXPECT_EQ(prof.semantic.width_sum, 2u);
}

TEST(ProfileRecord, UnknownTaskTypeAndTagsWarn) {
  const auto prof = profile_of(Prompt{{{"user", "<tool_call>x</tool_call>"}}, std::nullopt},
                               RecordLabels{"Poetry Slam", "fr"});
  EXPECT_EQ(prof.metadata.task_type, (Counter{{"Others", 1}}));
  EXPECT_EQ(prof.metadata.language, (Counter{{"fr", 1}}));
  EXPECT_EQ(prof.warning_counts, (Counter{{"task_type_not_in_vocabulary", 1}, {"unknown_tags", 2}}));
}

TEST(Merge, AssociativeOverRandomShardings) {
  const auto ps = synthetic_profiles(1000, 31337);
  const DatasetProfile whole = fold(ps, 0, ps.size());
  EXPECT_EQ(whole.record_count, 1000u);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> cuts = {0, ps.size()};
    const std::size_t shards = 1 + rng() % 12;
    for (std::size_t s = 1; s < shards; ++s) cuts.push_back(rng() % ps.size());
    std::sort(cuts.begin(), cuts.end());
    std::vector<DatasetProfile> parts;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) parts.push_back(fold(ps, cuts[s], cuts[s + 1]));
    // Combine the shard profiles in a random tree shape.
    while (parts.size() > 1) {
      const std::size_t i = rng() % (parts.size() - 1);
      parts[i] = merge(parts[i], parts[i + 1]);
      parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    }
    ASSERT_EQ(parts[0], whole) << "trial " << trial;
  }
}

TEST(Merge, IdentityAndCommutativeCounts) {
  const auto ps = synthetic_profiles(20, 8);
  const auto ab = merge(ps[0], ps[1]);
  const auto ba = merge(ps[1], ps[0]);
  EXPECT_EQ(ab, ba);
  EXPECT_EQ(merge(DatasetProfile{}, ps[3]), ps[3]);
  EXPECT_EQ(merge(ps[3], DatasetProfile{}), ps[3]);
}

TEST(Merge, RegistryMismatch) {
  DatasetProfile a;
  a.registry_fingerprint = "aaa";
  DatasetProfile b;
  b.registry_fingerprint = "bbb";
  try {
    merge(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RegistryMismatch);
  }
}

TEST(Distribution, SumsToOne) {
  const auto whole = fold(synthetic_profiles(300, 77), 0, 300);
  for (const Counter* c : {&whole.syntactic.delimiter, &whole.syntactic.prefix, &whole.syntactic.suffix,
                           &whole.syntactic.special_tokens, &whole.semantic.tag_frequency,
                           &whole.structural.turn_type, &whole.metadata.language}) {
    const auto d = distribution(*c);
    ASSERT_FALSE(d.empty());
    double sum = 0;
    for (const auto& [k, v] : d) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  EXPECT_TRUE(distribution({}).empty());
}

TEST(Distribution, TopKindsTieBreak) {
  const auto top = top_kinds(Counter{{"b", 2}, {"a", 2}, {"c", 5}, {"d", 1}}, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].first, "c");
  EXPECT_EQ(top[1].first, "a");
  EXPECT_EQ(top[2].first, "b");
  EXPECT_DOUBLE_EQ(top[0].second, 0.5);
}

TEST(TokenLengths, NearestRankMatchesSortedOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    DatasetProfile p;
    std::vector<std::uint64_t> values;
    const std::size_t n = 1 + rng() % 60;
    for (std::size_t i = 0; i < n; ++i) {
      values.push_back(rng() % 40);
      p.metadata.token_lengths[values.back()] += 1;
    }
    std::sort(values.begin(), values.end());
    auto rank = [&](double q) { return values[std::max<std::size_t>(1, std::size_t(std::ceil(q * n))) - 1]; };
    const auto s = p.token_length_summary();
    EXPECT_EQ(s.p50, rank(0.5));
    EXPECT_EQ(s.p95, rank(0.95));
    EXPECT_NEAR(s.mean, std::accumulate(values.begin(), values.end(), 0.0) / double(n), 1e-9);
  }
}

TEST(TokenLengths, WhitespaceTokens) {
  EXPECT_EQ(whitespace_token_count(""), 0u);
  EXPECT_EQ(whitespace_token_count("  a  b\tc\n"), 3u);
  EXPECT_EQ(whitespace_token_count("日本　語"), 2u);  // ideographic space
}

TEST(Stream, MatchesFoldAndIsThreadIndependent) {
  std::ifstream f(std::string(PROMPTPRISM_FIXTURES) + "/roundtrip_corpus.jsonl");
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string corpus = buf.str();

  DatasetProfile expected;
  expected.registry_fingerprint = reg().fingerprint();
  {
    std::istringstream in(corpus);
    JsonlReader reader(in);
    while (auto rec = reader.next()) {
      RecordLabels labels;
      if (rec->json.contains("task_type")) labels.task_type = rec->json["task_type"].get<std::string>();
      if (rec->json.contains("language")) labels.language = rec->json["language"].get<std::string>();
      auto ap = annotate_markers(parse_annotated_lenient(rec->prompt, reg()).prompt);
      expected = merge(expected, profile_record(ap, opts(), labels));
    }
  }
  for (std::size_t jobs : {1u, 3u, 8u}) {
    for (std::size_t batch : {1u, 7u, 1024u}) {
      std::istringstream in(corpus);
      const auto r = profile_stream(in, reg(), opts(), CorpusScanOptions{true, jobs, batch});
      EXPECT_TRUE(r.errors.empty());
      EXPECT_EQ(r.profile, expected) << jobs << "/" << batch;
    }
  }
}

TEST(Stream, LenientSkipsStrictThrows) {
  const std::string corpus =
      "{\"messages\":[{\"role\":\"user\",\"content\":\"<request_query>a</request_query>\"}]}\n"
      "{broken\n"
      "{\"messages\":[{\"role\":\"narrator\",\"content\":\"x\"}]}\n"
      "{\"messages\":[{\"role\":\"user\",\"content\":\"b\"}]}\n";
  std::istringstream lenient_in(corpus);
  const auto r = profile_stream(lenient_in, reg(), opts(), CorpusScanOptions{true, 2, 2});
  EXPECT_EQ(r.profile.record_count, 2u);
  EXPECT_EQ(r.profile.warning_counts.at("skipped_records"), 2u);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_NE(r.errors[0].find("line 2"), std::string::npos);
  EXPECT_NE(r.errors[1].find("line 3"), std::string::npos);

  std::istringstream strict_in(corpus);
  EXPECT_THROW(profile_stream(strict_in, reg(), opts(), CorpusScanOptions{false, 1, 16}), Error);
}

TEST(Report, JsonShapeAndRounding) {
  const auto whole = fold(synthetic_profiles(50, 2), 0, 50);
  const auto j = profile_to_json(whole, {{"input", "x.jsonl"}});
  EXPECT_EQ(j["schema"], "promptprism_profile");
  EXPECT_EQ(j["record_count"], 50);
  EXPECT_EQ(j["provenance"]["input"], "x.jsonl");
  for (const char* dim : {"delimiter", "prefix", "suffix", "special_tokens"}) {
    const auto& top = j["syntactic"][dim]["top3"];
    EXPECT_LE(top.size(), 3u);
    for (const auto& e : top) {
      const double v = e["proportion"].get<double>();
      EXPECT_NEAR(v * 1000.0, std::round(v * 1000.0), 1e-6);
    }
  }
  EXPECT_EQ(j["semantic"]["top3"].get<std::vector<std::string>>(), whole.top3_tags());
}

TEST(Report, RenderingIsDeterministic) {
  const auto a = fold(synthetic_profiles(80, 9), 0, 80);
  const auto b = fold(synthetic_profiles(80, 9), 0, 80);
  for (auto fmt : {ReportFormat::Json, ReportFormat::Markdown}) {
    EXPECT_EQ(render_report(a, fmt), render_report(b, fmt));
  }
  const auto md = render_report(a, ReportFormat::Markdown);
  EXPECT_NE(md.find("record"), std::string::npos);
  EXPECT_EQ(parse_report_format("md"), ReportFormat::Markdown);
  EXPECT_THROW(parse_report_format("xml"), Error);
}
