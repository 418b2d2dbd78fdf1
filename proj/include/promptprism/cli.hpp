#pragma once

// The `promptprism` command line, as a library entry point so it can be
// driven in-process by tests: run(args, out, err) -> exit code.
//
// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "promptprism/dataset.hpp"
#include "promptprism/digest.hpp"
#include "promptprism/errors.hpp"
#include "promptprism/evalkit.hpp"
#include "promptprism/experiments.hpp"
#include "promptprism/http_backend.hpp"
#include "promptprism/llm_gateway.hpp"
#include "promptprism/perturb.hpp"
#include "promptprism/profiler.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/syntax.hpp"
#include "promptprism/taxonomy.hpp"
#include "promptprism/templates.hpp"
#include "promptprism/workflows.hpp"

namespace promptprism::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes \n, \t, \\ and \s (one space). Any other escape is a usage error.
inline std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 >= s.size()) throw UsageError("dangling backslash in '" + std::string(s) + "'");
    switch (s[++i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      case 's': out += ' '; break;
      default: throw UsageError(std::string("unsupported escape \\") + s[i] + " (use \\n, \\t, \\\\ or \\s)");
    }
  }
  return out;
}

/// Every setting that affects outputs, with defaults materialized.
struct RunConfig {
  std::string backend = std::string(kMockBackend);
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  std::string api_key_env = "PROMPTPRISM_API_KEY";
  std::string registry_overlay;
  std::string special_tokens;
  std::string mock_fixture;
  std::string mock_fallback = "none";
  std::string transcript_in;
  std::string transcript_out;
  std::size_t jobs = 1;
  std::int64_t seed = 0;
  std::string format = "json";
  bool lenient = false;
  std::size_t call_cap = 0;  // 0 = unlimited
  int max_retries = 3;
  int max_in_flight = 4;
  double requests_per_second = 0;

  nlohmann::json to_json() const {
    return {{"backend", backend},
            {"base_url", base_url},
            {"model", model},
            {"api_key_env", api_key_env},
            {"registry_overlay", registry_overlay},
            {"special_tokens", special_tokens},
            {"mock_fixture", mock_fixture},
            {"mock_fallback", mock_fallback},
            {"transcript_in", transcript_in},
            {"jobs", jobs},
            {"seed", seed},
            {"format", format},
            {"lenient", lenient},
            {"call_cap", call_cap},
            {"max_retries", max_retries},
            {"max_in_flight", max_in_flight},
            {"requests_per_second", requests_per_second}};
  }
};

/// Options of the selected subcommand; output paths stay out of the digest.
struct CommandOptions {
  std::string input;
  std::string output;
  std::string report;
  std::string review_sheet;
  std::string task;
  bool classify = false;
  // perturb
  std::string component;
  std::string position;
  std::string delimiter;
  std::string normalize_delimiter;
  bool strip_tags = false;
  int message = -1;
  // refine
  std::vector<std::string> strategies{"default", "cot", "taxonomy"};
  std::size_t shots = 2;
  std::size_t variants = 5;
  std::size_t instances = 10;
  double refine_temperature = 0.7;
  // eval
  std::vector<std::string> references;
  std::string candidate;
  double beta = 1.0;
  std::string suite = "ordering";
  std::string variants_file;
  std::vector<std::string> components{"instruction", "request_query", "contextual_ref"};
  std::size_t runs = 50;
  bool remove_tags = false;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to `path`, or to `out` when the path is empty or "-".
inline void write_output(const std::string& path, const std::string& data, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << data;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::InvalidConfig, "cannot write '" + path + "'");
  f << data;
}

inline bool looks_like_jsonl(const std::string& path) {
  return path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
}

/// A JSON document with one prompt object or an array of them, or JSONL.
struct PromptDoc {
  bool jsonl = false;
  bool array = false;
  std::vector<nlohmann::json> records;
};

inline PromptDoc read_prompt_doc(const std::string& path) {
  PromptDoc doc;
  const std::string text = read_file(path);
  if (!looks_like_jsonl(path)) {
    try {
      auto j = nlohmann::json::parse(text);
      if (j.is_array()) {
        doc.array = true;
        for (auto& r : j) doc.records.push_back(std::move(r));
      } else {
        doc.records.push_back(std::move(j));
      }
      return doc;
    } catch (const nlohmann::json::exception&) {
      // fall through to JSON Lines
    }
  }
  doc.jsonl = true;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      doc.records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return doc;
}

inline std::string render_prompt_doc(const PromptDoc& doc) {
  if (doc.jsonl) {
    std::string out;
    for (const auto& r : doc.records) out += r.dump() + "\n";
    return out;
  }
  if (doc.array) return nlohmann::json(doc.records).dump(2) + "\n";
  return doc.records.empty() ? "{}\n" : doc.records.front().dump(2) + "\n";
}

inline void forbid_credentials(const nlohmann::json& j) {
  if (!j.is_object()) return;
  for (const auto& [k, v] : j.items()) {
    const auto lower = unicode::ascii_lower(k);
    if (lower == "api_key" || lower == "apikey" || lower == "token" || lower == "password") {
      throw UsageError("config key '" + k + "' is not accepted: credentials come only from environment variables");
    }
    forbid_credentials(v);
  }
}

inline std::string config_value_to_arg(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (const auto& x : v) {
      if (!s.empty()) s += ",";
      s += x.is_string() ? x.get<std::string>() : x.dump();
    }
    return s;
  }
  return v.dump();
}

}  // namespace detail

/// Parsed command line plus resolved settings.
struct Invocation {
  RunConfig cfg;
  CommandOptions cmd;
  std::string config_path;
  std::string command;      // leaf subcommand, e.g. "reorder"
  std::string command_path; // e.g. "perturb reorder"
  bool version = false;
};

/// Builds the CLI11 app bound to `inv`. `key_of` maps option long names to
/// the config key used for merging ("jobs", "reorder.position", ...).
inline std::unique_ptr<CLI::App> build_app(Invocation& inv, std::map<CLI::Option*, std::string>& key_of,
                                           bool enforce_required = true) {
  auto app = std::make_unique<CLI::App>("Prompt profiling, perturbation and evaluation toolkit", "promptprism");
  app->fallthrough();
  app->require_subcommand(0, 1);
  auto& c = inv.cfg;
  auto& o = inv.cmd;
  auto global = [&](CLI::Option* opt, std::string key) { key_of[opt] = std::move(key); };
  // Required options may still arrive from the config file on the second pass.
  auto req = [&](CLI::Option* opt) { return enforce_required ? opt->required() : opt; };

  app->add_option("--config", inv.config_path, "JSON config merged under command-line flags");
  app->add_flag("--version", inv.version, "Print version, registry and template checksums");
  global(app->add_option("--backend", c.backend, "Chat backend: mock or http"), "backend");
  global(app->add_option("--base-url", c.base_url, "HTTP backend base URL"), "base_url");
  global(app->add_option("--model", c.model, "HTTP backend model name"), "model");
  global(app->add_option("--api-key-env", c.api_key_env, "Environment variable holding the API key"), "api_key_env");
  global(app->add_option("--registry-overlay", c.registry_overlay, "JSON object of extra tag -> description"),
         "registry_overlay");
  global(app->add_option("--special-tokens", c.special_tokens, "JSON object of model label -> literal tokens"),
         "special_tokens");
  global(app->add_option("--mock-fixture", c.mock_fixture, "Mock responses: JSON object digest -> response"),
         "mock_fixture");
  global(app->add_option("--mock-fallback", c.mock_fallback, "Mock reply for unknown digests: none or echo")
             ->check(CLI::IsMember({"none", "echo"})),
         "mock_fallback");
  global(app->add_option("--transcript-in", c.transcript_in, "Replay a recorded transcript through the mock"),
         "transcript_in");
  global(app->add_option("--transcript-out", c.transcript_out, "Append every chat call as a JSON line"),
         "transcript_out");
  global(app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber), "jobs");
  global(app->add_option("--seed", c.seed, "Base seed"), "seed");
  global(app->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"json", "markdown"})),
         "format");
  global(app->add_flag("--lenient", c.lenient, "Skip or demote bad input instead of failing"), "lenient");
  global(app->add_option("--call-cap", c.call_cap, "Maximum chat calls (0 = unlimited)"), "call_cap");
  global(app->add_option("--max-retries", c.max_retries, "Retries on transient backend failures"), "max_retries");
  global(app->add_option("--max-in-flight", c.max_in_flight, "Concurrent chat calls")->check(CLI::PositiveNumber),
         "max_in_flight");
  global(app->add_option("--rps", c.requests_per_second, "Rate limit in requests per second (0 = off)"),
         "requests_per_second");

  auto sub_opt = [&](CLI::App* sub, CLI::Option* opt, const std::string& key) {
    key_of[opt] = sub->get_name() + "." + key;
    return opt;
  };

  auto* annotate = app->add_subcommand("annotate", "Tag raw prompts with the annotation meta-prompt");
  sub_opt(annotate, req(annotate->add_option("--input", o.input, "Prompts (JSON or JSONL)")), "input");
  annotate->add_option("--output,-o", o.output, "Tagged prompts (default stdout)");
  sub_opt(annotate, annotate->add_flag("--classify", o.classify, "Also label each prompt's task type"), "classify");

  auto* validate = app->add_subcommand("validate", "Check annotated prompts for well-formed tags");
  sub_opt(validate, req(validate->add_option("--input", o.input, "Annotated prompts (JSONL)")), "input");
  validate->add_option("--output,-o", o.output, "Per-record results as JSONL (default stdout)");
  validate->add_option("--review-sheet", o.review_sheet, "CSV of components for human review");

  auto* profile = app->add_subcommand("profile", "Profile a JSONL corpus");
  sub_opt(profile, req(profile->add_option("--input", o.input, "Corpus (JSONL)")), "input");
  profile->add_option("--report,-o", o.report, "Report path (default stdout)");

  auto* perturb = app->add_subcommand("perturb", "Reorder components or change delimiters");
  perturb->require_subcommand(1);
  auto* reorder = perturb->add_subcommand("reorder", "Move one component category");
  sub_opt(reorder, req(reorder->add_option("--input", o.input, "Prompt JSON or JSONL")), "input");
  reorder->add_option("--output,-o", o.output, "Output path (default stdout)");
  sub_opt(reorder, req(reorder->add_option("--component", o.component, "Top-level category")), "component");
  sub_opt(reorder, req(reorder->add_option("--position", o.position, "first, middle or last")), "position");
  sub_opt(reorder, reorder->add_option("--normalize-delimiter,--normalize-delimiters", o.normalize_delimiter, "Set every delimiter first"),
          "normalize_delimiter");
  sub_opt(reorder, reorder->add_flag("--strip-tags", o.strip_tags, "Emit plain text without tags"), "strip_tags");
  sub_opt(reorder, reorder->add_option("--message", o.message, "Message index (default last user)"), "message");
  auto* delim = perturb->add_subcommand("delimiter", "Replace delimiters between components");
  sub_opt(delim, req(delim->add_option("--input", o.input, "Prompt JSON or JSONL")), "input");
  delim->add_option("--output,-o", o.output, "Output path (default stdout)");
  sub_opt(delim, delim->add_option("--delimiter,--new", o.delimiter, "New delimiter; accepts \\n \\t \\\\ \\s")->required(),
          "delimiter");
  sub_opt(delim, delim->add_option("--position", o.position, "all, first, middle or last"), "position");
  sub_opt(delim, delim->add_flag("--strip-tags", o.strip_tags, "Emit plain text without tags"), "strip_tags");
  sub_opt(delim, delim->add_option("--message", o.message, "Message index (default last user)"), "message");

  auto* refine = app->add_subcommand("refine", "Compare default, CoT and taxonomy-refined instructions");
  sub_opt(refine, req(refine->add_option("--task", o.task, "Task bundle JSON")), "task");
  refine->add_option("--report,-o", o.report, "Report path (default stdout)");
  sub_opt(refine, refine->add_option("--strategies", o.strategies, "Comma-separated strategies")->delimiter(','),
          "strategies");
  sub_opt(refine, refine->add_option("--shots", o.shots, "Positive exemplars in each prompt"), "shots");
  sub_opt(refine, refine->add_option("--variants", o.variants, "Taxonomy refinements to generate"), "variants");
  sub_opt(refine, refine->add_option("--instances", o.instances, "Instances sampled from the task"), "instances");
  sub_opt(refine, refine->add_option("--refine-temperature", o.refine_temperature, "Temperature for refinement"),
          "refine_temperature");

  auto* rouge = app->add_subcommand("eval-rouge", "ROUGE-L between references and a candidate");
  rouge->add_option("--reference", o.references, "Reference text (repeatable)");
  rouge->add_option("--candidate", o.candidate, "Candidate text");
  sub_opt(rouge, rouge->add_option("--input", o.input, "JSONL of {reference|references, candidate}"), "input");
  sub_opt(rouge, rouge->add_option("--beta", o.beta, "F-measure beta"), "beta");
  rouge->add_option("--output,-o", o.output, "Output path (default stdout)");

  auto* sens = app->add_subcommand("eval-sensitivity", "Score a prompt under ordering or delimiter changes");
  sub_opt(sens, req(sens->add_option("--task", o.task, "Sensitivity task JSON")), "task");
  sens->add_option("--report,-o", o.report, "Report path (default stdout)");
  sub_opt(sens, sens->add_option("--suite", o.suite, "ordering, delimiter or custom")
                    ->check(CLI::IsMember({"ordering", "delimiter", "custom"})),
          "suite");
  sub_opt(sens, sens->add_option("--variants", o.variants_file, "JSON array of {label, spec} for custom"),
          "variants");
  sub_opt(sens, sens->add_option("--components", o.components, "Categories for the ordering suite")->delimiter(','),
          "components");
  sub_opt(sens, sens->add_option("--runs", o.runs, "Runs per variant")->check(CLI::PositiveNumber), "runs");
  sub_opt(sens, sens->add_flag("--remove-tags", o.remove_tags, "Strip tags before inference"), "remove_tags");
  return app;
}

inline void parse_args(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> rev(args.rbegin(), args.rend());
  app.parse(rev);
}

inline std::string leaf_name(const CLI::App& app, std::string& path) {
  const CLI::App* cur = &app;
  std::string leaf;
  while (true) {
    auto subs = cur->get_subcommands();
    if (subs.empty()) break;
    cur = subs.front();
    leaf = cur->get_name();
    path += (path.empty() ? "" : " ") + leaf;
  }
  return leaf;
}

/// Parses twice: the first pass finds --config and which options were given;
/// the second adds config values for every option left unset.
inline Invocation parse_invocation(const std::vector<std::string>& args) {
  Invocation first;
  std::map<CLI::Option*, std::string> keys1;
  auto app1 = build_app(first, keys1, false);
  parse_args(*app1, args);
  first.command = leaf_name(*app1, first.command_path);
  if (first.config_path.empty()) return first;

  nlohmann::json config;
  try {
    config = nlohmann::json::parse(detail::read_file(first.config_path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config '" + first.config_path + "': " + e.what());
  }
  if (!config.is_object()) throw UsageError("config '" + first.config_path + "' must be a JSON object");
  detail::forbid_credentials(config);

  std::vector<std::string> extra;
  for (const auto& [opt, key] : keys1) {
    if (opt->count() > 0) continue;
    const nlohmann::json* v = nullptr;
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      if (auto it = config.find(key); it != config.end()) v = &*it;
    } else if (key.substr(0, dot) == first.command) {
      auto sec = config.find(first.command);
      if (sec != config.end() && sec->is_object()) {
        if (auto it = sec->find(key.substr(dot + 1)); it != sec->end()) v = &*it;
      }
    }
    if (!v || v->is_null()) continue;
    const std::string name = opt->get_lnames().front();
    if (opt->get_type_size() == 0) {
      if (v->is_boolean() && v->get<bool>()) extra.push_back("--" + name);
      continue;
    }
    extra.push_back("--" + name);
    extra.push_back(detail::config_value_to_arg(*v));
  }
  std::vector<std::string> merged = args;
  merged.insert(merged.end(), extra.begin(), extra.end());
  Invocation second;
  std::map<CLI::Option*, std::string> keys2;
  auto app2 = build_app(second, keys2);
  parse_args(*app2, merged);
  second.command = leaf_name(*app2, second.command_path);
  return second;
}

inline nlohmann::json command_json(const Invocation& inv) {
  const auto& o = inv.cmd;
  nlohmann::json j = {{"command", inv.command_path}, {"input", o.input}, {"task", o.task}};
  if (inv.command == "annotate") j["classify"] = o.classify;
  if (inv.command == "reorder") {
    j.update({{"component", o.component},
              {"position", o.position},
              {"normalize_delimiter", o.normalize_delimiter},
              {"strip_tags", o.strip_tags},
              {"message", o.message}});
  }
  if (inv.command == "delimiter") {
    j.update({{"delimiter", o.delimiter}, {"position", o.position}, {"strip_tags", o.strip_tags}, {"message", o.message}});
  }
  if (inv.command == "refine") {
    j.update({{"strategies", o.strategies},
              {"shots", o.shots},
              {"variants", o.variants},
              {"instances", o.instances},
              {"refine_temperature", o.refine_temperature}});
  }
  if (inv.command == "eval-rouge") j.update({{"beta", o.beta}, {"references", o.references}, {"candidate", o.candidate}});
  if (inv.command == "eval-sensitivity") {
    j.update({{"suite", o.suite},
              {"variants", o.variants_file},
              {"components", o.components},
              {"runs", o.runs},
              {"remove_tags", o.remove_tags}});
  }
  return j;
}

inline nlohmann::json resolved_config(const Invocation& inv) {
  return {{"run", inv.cfg.to_json()}, {"command", command_json(inv)}};
}

/// Shared state for one invocation: registry, syntax config and gateway.
struct Context {
  Invocation inv;
  TagRegistry registry = TagRegistry::builtin();
  SyntaxConfig syntax;
  std::unique_ptr<Gateway> gateway;
  std::shared_ptr<MockBackend> mock;
  std::unique_ptr<std::ofstream> transcript_sink;
  std::string config_digest;

  explicit Context(Invocation i) : inv(std::move(i)) {
    if (!inv.cfg.registry_overlay.empty()) registry.load_overlay_file(inv.cfg.registry_overlay);
    if (!inv.cfg.special_tokens.empty()) syntax = SyntaxConfig::from_file(inv.cfg.special_tokens);
    config_digest = promptprism::config_digest(resolved_config(inv));
  }

  Gateway& gw() {
    if (gateway) return *gateway;
    const auto& c = inv.cfg;
    GatewayOptions go;
    go.max_retries = c.max_retries;
    if (c.call_cap) go.call_cap = c.call_cap;
    go.max_in_flight = c.max_in_flight;
    go.requests_per_second = c.requests_per_second;
    gateway = std::make_unique<Gateway>(go);
    mock = std::make_shared<MockBackend>();
    if (!c.mock_fixture.empty()) mock->load_fixture_file(c.mock_fixture);
    if (!c.transcript_in.empty()) {
      std::ifstream in(c.transcript_in);
      if (!in) throw Error(Errc::InvalidConfig, "cannot open transcript '" + c.transcript_in + "'");
      mock->load_transcript(in);
    }
    if (c.mock_fallback == "echo") {
      mock->set_fallback([](const ChatRequest& r) { return r.messages.back().content; });
    }
    gateway->register_backend(mock);
    if (c.backend == "http") {
      HttpBackendConfig hc;
      hc.base_url = c.base_url;
      hc.model = c.model;
      hc.api_key_env = c.api_key_env;
      gateway->register_backend(std::make_shared<HttpChatBackend>(hc));
    }
    if (!c.transcript_out.empty()) {
      transcript_sink = std::make_unique<std::ofstream>(c.transcript_out, std::ios::app);
      if (!*transcript_sink) throw Error(Errc::InvalidConfig, "cannot write transcript '" + c.transcript_out + "'");
      gateway->set_transcript_sink(transcript_sink.get());
    }
    return *gateway;
  }

  WorkflowOptions workflow() const {
    WorkflowOptions w;
    w.backend = inv.cfg.backend;
    return w;
  }

  nlohmann::json provenance() const {
    return {{"config_digest", config_digest},
            {"registry_fingerprint", registry.fingerprint()},
            {"template_version", std::string(templates::kTemplateVersion)}};
  }
};

inline int cmd_annotate(Context& ctx, std::ostream& out, std::ostream& err) {
  auto doc = detail::read_prompt_doc(ctx.inv.cmd.input);
  int status = kOk;
  for (std::size_t i = 0; i < doc.records.size(); ++i) {
    auto& rec = doc.records[i];
    try {
      const Prompt raw = prompt_from_json(rec);
      auto result = annotate_prompt(ctx.gw(), raw, ctx.registry, ctx.workflow());
      rec["messages"] = prompt_to_json(result.tagged)["messages"];
      const auto fc = format_correctness(result.tagged, ctx.registry);
      rec["annotation"] = {{"components", result.parsed.component_count()},
                           {"unclosed", result.diagnostics.unclosed},
                           {"mismatched", result.diagnostics.mismatched},
                           {"nested", result.diagnostics.nested},
                           {"stray_close", result.diagnostics.stray_close},
                           {"format_correctness", fc.ratio},
                           {"config_digest", ctx.config_digest}};
      if (!result.diagnostics.clean()) {
        err << "record " << i + 1 << ": " << result.diagnostics.total() << " tag problem(s) demoted\n";
      }
      if (ctx.inv.cmd.classify) {
        auto label = classify_task(ctx.gw(), raw, ctx.workflow());
        rec["task_type"] = label.value;
        for (const auto& w : label.warnings) err << "record " << i + 1 << ": " << w << "\n";
      }
    } catch (const Error& e) {
      err << "record " << i + 1 << ": " << e.what() << "\n";
      status = kFailure;
      if (!ctx.inv.cfg.lenient) break;
    }
  }
  detail::write_output(ctx.inv.cmd.output, detail::render_prompt_doc(doc), out);
  return status;
}

inline int cmd_validate(Context& ctx, std::ostream& out, std::ostream& err) {
  std::ifstream in(ctx.inv.cmd.input);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open '" + ctx.inv.cmd.input + "'");
  std::string results;
  std::string sheet(kReviewSheetHeader);
  std::size_t line_no = 0;
  std::size_t invalid = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json r = {{"line", line_no}};
    try {
      const auto j = nlohmann::json::parse(line);
      const Prompt p = prompt_from_json(j);
      if (p.id) r["id"] = *p.id;
      const auto lp = parse_annotated_lenient(p, ctx.registry);
      const auto fc = format_correctness(p, ctx.registry);
      std::string strict_error;
      try {
        parse_annotated(p, ctx.registry);
      } catch (const Error& e) {
        strict_error = e.what();
      }
      const bool ok = strict_error.empty();
      r["valid"] = ok;
      if (!ok) r["error"] = strict_error;
      r["components"] = lp.prompt.component_count();
      r["diagnostics"] = {{"unclosed", lp.diagnostics.unclosed},
                          {"mismatched", lp.diagnostics.mismatched},
                          {"nested", lp.diagnostics.nested},
                          {"stray_close", lp.diagnostics.stray_close}};
      r["unknown_tags"] = lp.prompt.unknown_tag_count();
      r["format_correctness"] = {{"ratio", fc.ratio},
                                 {"matched", fc.matched},
                                 {"unclosed", fc.unclosed},
                                 {"orphan_closes", fc.orphan_closes},
                                 {"no_tags", fc.no_tags}};
      if (!ok) {
        ++invalid;
        err << "line " << line_no << ": " << strict_error << " (format_correctness " << promptprism::detail::fmt3(fc.ratio)
            << ")\n";
      }
      sheet += review_sheet_rows(lp.prompt, p.id.value_or("line-" + std::to_string(line_no)));
    } catch (const nlohmann::json::exception& e) {
      ++invalid;
      r["valid"] = false;
      r["error"] = std::string("MalformedRecord: ") + e.what();
      err << "line " << line_no << ": malformed JSON\n";
    } catch (const Error& e) {
      ++invalid;
      r["valid"] = false;
      r["error"] = e.what();
      err << "line " << line_no << ": " << e.what() << "\n";
    }
    results += r.dump() + "\n";
  }
  detail::write_output(ctx.inv.cmd.output, results, out);
  if (!ctx.inv.cmd.review_sheet.empty()) detail::write_output(ctx.inv.cmd.review_sheet, sheet, out);
  err << line_no << " line(s) read, " << invalid << " invalid\n";
  return invalid ? kFailure : kOk;
}

inline int cmd_profile(Context& ctx, std::ostream& out, std::ostream& err) {
  std::ifstream in(ctx.inv.cmd.input);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open '" + ctx.inv.cmd.input + "'");
  ProfileOptions po;
  po.registry_fingerprint = ctx.registry.fingerprint();
  po.syntax = ctx.syntax;
  CorpusScanOptions so;
  so.lenient = ctx.inv.cfg.lenient;
  so.jobs = ctx.inv.cfg.jobs;
  auto result = profile_stream(in, ctx.registry, po, so);
  for (const auto& e : result.errors) err << "skipped " << e << "\n";
  auto prov = ctx.provenance();
  prov["input"] = ctx.inv.cmd.input;
  detail::write_output(ctx.inv.cmd.report,
                       render_report(result.profile, parse_report_format(ctx.inv.cfg.format), prov), out);
  return kOk;
}

inline int cmd_perturb(Context& ctx, std::ostream& out, std::ostream& err) {
  const auto& o = ctx.inv.cmd;
  PerturbationSpec spec;
  if (ctx.inv.command == "reorder") {
    spec = PerturbationSpec::reorder(o.component, o.position);
    if (!o.normalize_delimiter.empty()) spec.normalize_delimiter = unescape(o.normalize_delimiter);
    parse_reorder_position(o.position);
  } else {
    spec = PerturbationSpec::delimiter_change(unescape(o.delimiter), o.position.empty() ? "all" : o.position);
    parse_delimiter_position(spec.position);
  }
  spec.remove_tags = o.strip_tags;
  const std::optional<std::size_t> message =
      o.message >= 0 ? std::optional<std::size_t>(static_cast<std::size_t>(o.message)) : std::nullopt;

  auto doc = detail::read_prompt_doc(o.input);
  int status = kOk;
  for (std::size_t i = 0; i < doc.records.size(); ++i) {
    auto& rec = doc.records[i];
    try {
      const Prompt p = prompt_from_json(rec);
      AnnotatedPrompt ap;
      if (ctx.inv.cfg.lenient) {
        auto lp = parse_annotated_lenient(p, ctx.registry);
        if (!lp.diagnostics.clean()) err << "record " << i + 1 << ": demoted " << lp.diagnostics.total() << " tag(s)\n";
        ap = std::move(lp.prompt);
      } else {
        ap = parse_annotated(p, ctx.registry);
      }
      Prompt result;
      try {
        result = apply_perturbation(ap, spec, ctx.registry, message);
      } catch (const Error& e) {
        if (!ctx.inv.cfg.lenient || e.code() != Errc::NoComponentsFound) throw;
        err << "record " << i + 1 << ": " << e.what() << "; left unchanged\n";
        result = serialize(ap, spec.remove_tags);
      }
      rec["messages"] = prompt_to_json(result)["messages"];
      rec["perturbation"] = spec.to_json();
      rec["perturbation"]["config_digest"] = ctx.config_digest;
    } catch (const Error& e) {
      err << "record " << i + 1 << ": " << e.what() << "\n";
      if (e.code() == Errc::InvalidComponentName || e.code() == Errc::InvalidPosition) throw;
      status = kFailure;
      if (!ctx.inv.cfg.lenient) return status;
    }
  }
  detail::write_output(o.output, detail::render_prompt_doc(doc), out);
  return status;
}

inline std::string render_experiment(const ExperimentReport& r, const std::string& format) {
  return parse_report_format(format) == ReportFormat::Json ? report_to_json(r).dump(2) + "\n" : render_markdown(r);
}

inline int cmd_refine(Context& ctx, std::ostream& out, std::ostream&) {
  const auto& o = ctx.inv.cmd;
  RefinementConfig rc;
  rc.strategies.clear();
  for (const auto& s : o.strategies) rc.strategies.push_back(parse_strategy(s));
  rc.shots = o.shots;
  rc.variants = o.variants;
  rc.instances = o.instances;
  rc.refine_temperature = o.refine_temperature;
  rc.seed = ctx.inv.cfg.seed;
  rc.backend = ctx.inv.cfg.backend;
  rc.jobs = ctx.inv.cfg.jobs;
  auto report = run_refinement(TaskBundle::from_file(o.task), rc, ctx.gw(), ctx.registry);
  report.provenance["run_config_digest"] = ctx.config_digest;
  detail::write_output(o.report, render_experiment(report, ctx.inv.cfg.format), out);
  return kOk;
}

inline int cmd_eval_rouge(Context& ctx, std::ostream& out, std::ostream&) {
  const auto& o = ctx.inv.cmd;
  RougeConfig rc;
  rc.beta = o.beta;
  std::string data;
  if (!o.input.empty()) {
    std::ifstream in(o.input);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open '" + o.input + "'");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto j = nlohmann::json::parse(line);
        std::vector<std::string> refs;
        if (j.contains("references")) {
          refs = j.at("references").get<std::vector<std::string>>();
        } else {
          refs.push_back(j.at("reference").get<std::string>());
        }
        const double score = rouge_l_multi(refs, j.at("candidate").get<std::string>(), rc);
        data += nlohmann::json({{"line", n}, {"rouge_l", score}}).dump() + "\n";
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedRecord, "line " + std::to_string(n) + ": " + e.what());
      }
    }
  } else {
    if (o.references.empty()) throw UsageError("eval-rouge needs --input or at least one --reference");
    data = nlohmann::json({{"rouge_l", rouge_l_multi(o.references, o.candidate, rc)}, {"beta", rc.beta}}).dump() + "\n";
  }
  detail::write_output(o.output, data, out);
  return kOk;
}

inline int cmd_eval_sensitivity(Context& ctx, std::ostream& out, std::ostream&) {
  const auto& o = ctx.inv.cmd;
  SensitivityConfig sc;
  if (o.suite == "ordering") {
    sc.variants = ordering_suite(o.components);
  } else if (o.suite == "delimiter") {
    sc.variants = delimiter_suite();
  } else {
    if (o.variants_file.empty()) throw UsageError("--suite custom needs --variants");
    const auto j = nlohmann::json::parse(detail::read_file(o.variants_file));
    for (const auto& v : j) {
      sc.variants.emplace_back(v.at("label").get<std::string>(),
                               PerturbationSpec::from_json(v.contains("spec") ? v.at("spec") : v));
    }
  }
  sc.runs_per_variant = o.runs;
  sc.seed = ctx.inv.cfg.seed;
  sc.backend = ctx.inv.cfg.backend;
  sc.jobs = ctx.inv.cfg.jobs;
  sc.remove_tags = o.remove_tags;
  auto report = run_sensitivity(SensitivityTask::from_file(o.task), sc, ctx.gw(), ctx.registry);
  report.provenance["run_config_digest"] = ctx.config_digest;
  detail::write_output(o.report, render_experiment(report, ctx.inv.cfg.format), out);
  return kOk;
}

inline std::string version_text() {
  std::string s = "promptprism " + std::string(kVersion) + "\n";
  s += "registry " + TagRegistry::builtin().fingerprint() + "\n";
  s += "templates v" + std::string(templates::kTemplateVersion) + "\n";
  for (const auto& [name, sum] : templates::checksums()) s += "  " + name + " " + sum + "\n";
  return s;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Invocation inv;
  try {
    inv = parse_invocation(args);
  } catch (const CLI::CallForHelp&) {
    Invocation tmp;
    std::map<CLI::Option*, std::string> keys;
    out << build_app(tmp, keys)->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    Invocation tmp;
    std::map<CLI::Option*, std::string> keys;
    out << build_app(tmp, keys)->help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    Invocation tmp;
    std::map<CLI::Option*, std::string> keys;
    err << "error: " << e.what() << "\n\n" << build_app(tmp, keys)->help();
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (inv.version) {
    out << version_text();
    return kOk;
  }
  if (inv.command.empty()) {
    Invocation tmp;
    std::map<CLI::Option*, std::string> keys;
    err << "error: a subcommand is required\n\n" << build_app(tmp, keys)->help();
    return kUsage;
  }
  try {
    Context ctx(inv);
    if (inv.command == "annotate") return cmd_annotate(ctx, out, err);
    if (inv.command == "validate") return cmd_validate(ctx, out, err);
    if (inv.command == "profile") return cmd_profile(ctx, out, err);
    if (inv.command == "reorder" || inv.command == "delimiter") return cmd_perturb(ctx, out, err);
    if (inv.command == "refine") return cmd_refine(ctx, out, err);
    if (inv.command == "eval-rouge") return cmd_eval_rouge(ctx, out, err);
    if (inv.command == "eval-sensitivity") return cmd_eval_sensitivity(ctx, out, err);
    err << "error: unknown command '" << inv.command_path << "'\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.code()) {
      case Errc::InvalidConfig:
      case Errc::InvalidPosition:
      case Errc::InvalidComponentName:
        return kUsage;
      default:
        return kFailure;
    }
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace promptprism::cli
