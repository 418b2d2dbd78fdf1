#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "promptprism/cli.hpp"

namespace fs = std::filesystem;
using promptprism::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("promptprism_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = (dir_ / name).string();
    std::ofstream(p) << text;
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string read(const std::string& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

std::string fixture(const std::string& name) { return std::string(PROMPTPRISM_FIXTURES) + "/" + name; }

const char* kTagged =
    R"({"id":"p1","messages":[{"role":"user","content":"<instruction>Sort the list.</instruction>\n\n<contextual_ref>Numbers are integers.</contextual_ref>\n\n<request_query>3 1 2</request_query>"}]})";

std::string three_records() {
  return std::string(kTagged) + "\n" +
         R"({"id":"p2","messages":[{"role":"system","content":"<instruction:guideline:role>You are terse.</instruction:guideline:role>"},{"role":"user","content":"<request_query>Hi</request_query>"}]})" +
         "\n" + R"({"id":"p3","messages":[{"role":"user","content":"plain text only"}]})" + "\n";
}

}  // namespace

TEST_F(Cli, VersionListsTemplateChecksums) {
  const auto r = cli({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.starts_with("promptprism "));
  EXPECT_NE(r.out.find("ac483b72b8900a37c9e5d03d49d09337b53bafdbf529cf01f5fa597582c9c0b3"), std::string::npos);
  EXPECT_NE(r.out.find("registry "), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"profile"}).code, 2);  // --input is required
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"profile", "--input", "x", "--no-such-flag"}).code, 2);
  const auto in = write("p.json", kTagged);
  EXPECT_EQ(cli({"perturb", "reorder", "--input", in, "--component", "instruction", "--position", "top"}).code, 2);
  EXPECT_EQ(cli({"perturb", "reorder", "--input", in, "--component", "bogus", "--position", "first"}).code, 2);
  EXPECT_EQ(cli({"profile", "--input", in, "--format", "yaml"}).code, 2);
  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("eval-sensitivity"), std::string::npos);
}

TEST_F(Cli, ProfileCountsRecords) {
  const auto in = write("corpus.jsonl", three_records());
  const auto r = cli({"profile", "--input", in});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["record_count"], 3);
  EXPECT_TRUE(j["provenance"].contains("config_digest"));
  const auto md = cli({"profile", "--input", in, "--format", "markdown"});
  EXPECT_NE(md.out.find("- record_count: 3"), std::string::npos);
}

TEST_F(Cli, ProfileIsStableAcrossJobsAndOutputPaths) {
  const auto in = write("corpus.jsonl", three_records());
  ASSERT_EQ(cli({"profile", "--input", in, "--report", path("a.json")}).code, 0);
  ASSERT_EQ(cli({"profile", "--input", in, "--report", path("b.json"), "--jobs", "4"}).code, 0);
  auto a = nlohmann::json::parse(read(path("a.json")));
  auto b = nlohmann::json::parse(read(path("b.json")));
  // jobs is part of the run configuration, the output path is not.
  EXPECT_NE(a["provenance"]["config_digest"], b["provenance"]["config_digest"]);
  a.erase("provenance");
  b.erase("provenance");
  EXPECT_EQ(a, b);
  ASSERT_EQ(cli({"profile", "--input", in, "--report", path("c.json")}).code, 0);
  EXPECT_EQ(nlohmann::json::parse(read(path("c.json")))["provenance"]["config_digest"],
            nlohmann::json::parse(read(path("a.json")))["provenance"]["config_digest"]);
}

TEST_F(Cli, ProfileStrictFailsOnMalformedLenientSkips) {
  const auto in = write("corpus.jsonl", three_records() + "{not json\n");
  EXPECT_EQ(cli({"profile", "--input", in}).code, 1);
  const auto r = cli({"profile", "--input", in, "--lenient"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out)["record_count"], 3);
  EXPECT_NE(r.err.find("skipped"), std::string::npos);
}

TEST_F(Cli, ValidateReportsBadRecords) {
  const auto in = write("v.jsonl", std::string(kTagged) + "\n" +
                                       R"({"messages":[{"role":"user","content":"<instruction>open"}]})" + "\n" +
                                       "{oops\n");
  const auto r = cli({"validate", "--input", in, "--review-sheet", path("sheet.csv")});
  EXPECT_EQ(r.code, 1);
  std::vector<nlohmann::json> rows;
  std::istringstream lines(r.out);
  for (std::string l; std::getline(lines, l);) rows.push_back(nlohmann::json::parse(l));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0]["valid"].get<bool>());
  EXPECT_FALSE(rows[1]["valid"].get<bool>());
  EXPECT_EQ(rows[1]["format_correctness"]["unclosed"], 1);
  EXPECT_FALSE(rows[2]["valid"].get<bool>());
  EXPECT_NE(r.err.find("3 line(s) read, 2 invalid"), std::string::npos);
  EXPECT_NE(read(path("sheet.csv")).find("p1"), std::string::npos);

  const auto good = write("g.jsonl", std::string(kTagged) + "\n");
  EXPECT_EQ(cli({"validate", "--input", good}).code, 0);
}

TEST_F(Cli, PerturbReorderAndDelimiter) {
  const auto in = write("p.json", kTagged);
  auto r = cli({"perturb", "reorder", "--input", in, "--component", "request_query", "--position", "first"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["messages"][0]["content"],
            "<request_query>3 1 2</request_query>\n\n<instruction>Sort the list.</instruction>\n\n"
            "<contextual_ref>Numbers are integers.</contextual_ref>");
  EXPECT_EQ(j["perturbation"]["op"], "reorder");

  r = cli({"perturb", "delimiter", "--input", in, "--delimiter", "\\t", "--strip-tags"});
  ASSERT_EQ(r.code, 0) << r.err;
  j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["messages"][0]["content"], "Sort the list.\tNumbers are integers.\t3 1 2");

  r = cli({"perturb", "delimiter", "--input", in, "--new", "\\s", "--position", "last", "-o", path("out.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(read(path("out.json")).find("</contextual_ref> <request_query>"), std::string::npos);
}

TEST_F(Cli, ConfigFileFillsUnsetOptions) {
  const auto in = write("p.json", kTagged);
  const auto cfg = write("cfg.json", nlohmann::json({{"format", "json"},
                                                     {"reorder",
                                                      {{"input", in},
                                                       {"component", "request_query"},
                                                       {"position", "last"}}}})
                                         .dump());
  auto r = cli({"perturb", "reorder", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out)["messages"][0]["content"].get<std::string>().ends_with(
      "<request_query>3 1 2</request_query>"));
  // Command-line values win over the file.
  r = cli({"perturb", "reorder", "--config", cfg, "--position", "first"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out)["messages"][0]["content"].get<std::string>().starts_with(
      "<request_query>"));
}

TEST_F(Cli, ConfigRejectsCredentials) {
  const auto in = write("c.jsonl", three_records());
  for (const char* key : {"api_key", "API_KEY", "token", "password"}) {
    const auto cfg = write("cfg.json", nlohmann::json({{"backend", "http"}, {key, "sk-123"}}).dump());
    const auto r = cli({"profile", "--input", in, "--config", cfg});
    EXPECT_EQ(r.code, 2) << key;
    EXPECT_NE(r.err.find("environment"), std::string::npos);
  }
  const auto nested = write("n.json", R"({"profile": {"token": "x"}})");
  EXPECT_EQ(cli({"profile", "--input", in, "--config", nested}).code, 2);
  EXPECT_EQ(cli({"profile", "--input", in, "--config", write("bad.json", "[1]")}).code, 2);
}

TEST_F(Cli, EvalRouge) {
  auto r = cli({"eval-rouge", "--reference", "the cat sat", "--candidate", "the cat"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(nlohmann::json::parse(r.out)["rouge_l"].get<double>(), 0.8, 1e-12);
  const auto in = write("r.jsonl", R"({"reference":"a b c","candidate":"a b c"})"
                                   "\n"
                                   R"({"references":["x y","a b"],"candidate":"a b"})"
                                   "\n");
  r = cli({"eval-rouge", "--input", in});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "{\"line\":1,\"rouge_l\":1.0}\n{\"line\":2,\"rouge_l\":1.0}\n");
  EXPECT_EQ(cli({"eval-rouge"}).code, 2);
}

TEST_F(Cli, ExperimentsAreReproducibleWithEchoMock) {
  const std::vector<std::string> refine = {"refine", "--task", fixture("task_bundle.json"), "--mock-fallback", "echo",
                                           "--variants", "2", "--instances", "4"};
  auto a = cli(refine);
  ASSERT_EQ(a.code, 0) << a.err;
  auto jobs = refine;
  jobs.insert(jobs.end(), {"--jobs", "3", "--transcript-out", path("t.jsonl")});
  auto b = cli(jobs);
  ASSERT_EQ(b.code, 0) << b.err;
  auto ja = nlohmann::json::parse(a.out);
  auto jb = nlohmann::json::parse(b.out);
  EXPECT_EQ(ja["rows"], jb["rows"]);
  EXPECT_EQ(ja["rows"].size(), 3u);

  // Replaying the transcript with no fallback reproduces the report.
  auto replay = cli({"refine", "--task", fixture("task_bundle.json"), "--transcript-in", path("t.jsonl"),
                     "--variants", "2", "--instances", "4"});
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(nlohmann::json::parse(replay.out)["rows"], ja["rows"]);

  const std::vector<std::string> sens = {"eval-sensitivity", "--task", fixture("sensitivity_task.json"),
                                         "--mock-fallback", "echo", "--suite", "delimiter", "--runs", "3",
                                         "--format", "markdown"};
  const auto s1 = cli(sens);
  const auto s2 = cli(sens);
  ASSERT_EQ(s1.code, 0) << s1.err;
  EXPECT_EQ(s1.out, s2.out);
  EXPECT_NE(s1.out.find("| whitespace |"), std::string::npos);
}

TEST_F(Cli, MockWithoutResponseFailsAndCapStops) {
  const auto r = cli({"refine", "--task", fixture("task_bundle.json")});
  EXPECT_EQ(r.code, 1);
  const auto capped = cli({"refine", "--task", fixture("task_bundle.json"), "--mock-fallback", "echo", "--call-cap", "3"});
  EXPECT_EQ(capped.code, 1);
  EXPECT_NE(capped.err.find("BudgetExceeded"), std::string::npos) << capped.err;
}

TEST_F(Cli, HttpBackendWithoutKeyFails) {
  const auto in = write("raw.json", R"({"messages":[{"role":"user","content":"hello"}]})");
  ::unsetenv("PROMPTPRISM_TEST_MISSING_KEY");
  const auto r = cli({"annotate", "--input", in, "--backend", "http", "--base-url", "http://127.0.0.1:9",
                      "--api-key-env", "PROMPTPRISM_TEST_MISSING_KEY"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("PROMPTPRISM_TEST_MISSING_KEY"), std::string::npos) << r.err;
}

TEST_F(Cli, BinaryExitCodes) {
  const std::string bin = PROMPTPRISM_CLI_PATH;
  const auto in = write("c.jsonl", three_records());
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(bin + " --version"), 0);
  EXPECT_EQ(status(bin + " profile --input " + in), 0);
  EXPECT_EQ(status(bin + " profile"), 2);
  EXPECT_EQ(status(bin + " validate --input " + write("bad.jsonl", "{x\n")), 1);
}
