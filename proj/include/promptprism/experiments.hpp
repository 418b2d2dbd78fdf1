#pragma once

// Refinement and sensitivity experiment runners and their reports.
//
// Both runners build the full list of chat jobs up front, execute them on a
// bounded worker pool and gather results by job index, so report bytes do
// not depend on scheduling. Reports carry no timestamps.

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "promptprism/dataset.hpp"
#include "promptprism/digest.hpp"
#include "promptprism/errors.hpp"
#include "promptprism/evalkit.hpp"
#include "promptprism/llm_gateway.hpp"
#include "promptprism/perturb.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/taxonomy.hpp"
#include "promptprism/templates.hpp"
#include "promptprism/workflows.hpp"

namespace promptprism {

struct Instance {
  std::string id;
  std::string input;
  std::vector<std::string> outputs;
};

struct Exemplar {
  std::string input;
  std::string output;
  std::string explanation;
};

/// Task bundle in the Super-NaturalInstructions layout.
struct TaskBundle {
  std::string name;
  std::string definition;
  std::vector<Instance> instances;
  std::vector<Exemplar> positive_examples;
  std::vector<Exemplar> negative_examples;

  static TaskBundle from_json(const nlohmann::json& j) {
    try {
      TaskBundle t;
      t.name = j.value("name", "");
      const auto& def = j.at("definition");
      t.definition = def.is_array() ? def.at(0).get<std::string>() : def.get<std::string>();
      std::size_t n = 0;
      for (const auto& inst : j.at("instances")) {
        Instance i;
        i.id = inst.value("id", "instance-" + std::to_string(n));
        i.input = inst.at("input").get<std::string>();
        const auto& outs = inst.at("outputs");
        if (outs.is_string()) {
          i.outputs.push_back(outs.get<std::string>());
        } else {
          i.outputs = outs.get<std::vector<std::string>>();
        }
        t.instances.push_back(std::move(i));
        ++n;
      }
      auto exemplars = [&](const char* key) {
        std::vector<Exemplar> out;
        if (!j.contains(key)) return out;
        for (const auto& e : j.at(key)) {
          if (e.is_string()) {
            out.push_back(Exemplar{e.get<std::string>(), "", ""});
          } else {
            out.push_back(Exemplar{e.at("input").get<std::string>(), e.at("output").get<std::string>(),
                                   e.value("explanation", "")});
          }
        }
        return out;
      };
      t.positive_examples = exemplars("positive_examples");
      t.negative_examples = exemplars("negative_examples");
      if (t.instances.empty()) throw Error(Errc::InvalidConfig, "task bundle has no instances");
      return t;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, std::string("task bundle: ") + e.what());
    }
  }

  static TaskBundle from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open task bundle '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, "task bundle '" + path + "': " + e.what());
    }
  }
};

inline std::string render_exemplars(const std::vector<Exemplar>& xs, std::string_view heading) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += "\n\n";
    out += std::string(heading) + " " + std::to_string(i + 1) + "-\n";
    out += "input: " + xs[i].input + "\n";
    out += "output: " + xs[i].output;
    if (!xs[i].explanation.empty()) out += "\nexplanation: " + xs[i].explanation;
  }
  return out;
}

/// Inference prompt: instruction, the first `shots` positive examples when
/// shots > 0, then the instance.
inline std::string assemble_inference_prompt(std::string_view instruction, const TaskBundle& task,
                                             std::size_t shots, const Instance& instance) {
  std::string out = "Definition: " + std::string(instruction) + "\n\n";
  if (shots > 0 && !task.positive_examples.empty()) {
    std::vector<Exemplar> used(task.positive_examples.begin(),
                               task.positive_examples.begin() +
                                   static_cast<std::ptrdiff_t>(std::min(shots, task.positive_examples.size())));
    out += render_exemplars(used, "Positive Example") + "\n\n";
  }
  out += "Now complete the following example-\ninput: " + instance.input + "\noutput:";
  return out;
}

/// Deterministic subset of instance indices (Fisher-Yates on mt19937_64,
/// whose output sequence is fixed by the standard).
inline std::vector<std::size_t> sample_instances(std::size_t available, std::size_t wanted, std::uint64_t seed) {
  std::vector<std::size_t> idx(available);
  for (std::size_t i = 0; i < available; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = available; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  if (wanted < available) idx.resize(wanted);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct ReportRow {
  std::string label;
  std::vector<double> scores;  // ROUGE-L x 100
  Descriptive stats;
  std::optional<double> relative_change;
};

struct ExperimentReport {
  std::string kind;            // "refinement" | "sensitivity"
  std::string reference_label; // row relative changes are measured against
  RougeConfig rouge;
  std::vector<ReportRow> rows;
  std::optional<AnovaResult> anova;
  std::vector<std::string> notes;
  nlohmann::json provenance = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json number_or_string(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline std::string fixed2(double x) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << x;
  return os.str();
}

}  // namespace detail

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["schema"] = "promptprism_experiment";
  j["version"] = 1;
  j["kind"] = r.kind;
  j["metric"] = {{"name", "rouge_l"},
                 {"scale", 100},
                 {"beta", r.rouge.beta},
                 {"lowercase", r.rouge.lowercase},
                 {"strip_punctuation", r.rouge.strip_punctuation},
                 {"tokenizer", "whitespace"},
                 {"multi_reference", "max"}};
  j["reference"] = r.reference_label;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json jr;
    jr["label"] = row.label;
    jr["n"] = row.stats.n;
    jr["mean"] = row.stats.mean;
    jr["std"] = row.stats.std ? nlohmann::json(*row.stats.std) : nlohmann::json(nullptr);
    if (row.relative_change) {
      jr["relative_change"] = *row.relative_change;
      jr["relative_change_display"] = format_percent(*row.relative_change);
    } else {
      jr["relative_change"] = nullptr;
    }
    jr["scores"] = row.scores;
    j["rows"].push_back(std::move(jr));
  }
  if (r.anova) {
    j["anova"] = {{"f_stat", detail::number_or_string(r.anova->f_stat)},
                  {"df_between", r.anova->df_between},
                  {"df_within", r.anova->df_within},
                  {"p_value", r.anova->p_value},
                  {"alpha", r.anova->alpha},
                  {"significant", r.anova->significant},
                  {"grouping", "per-variant runs"}};
  } else {
    j["anova"] = nullptr;
  }
  j["notes"] = r.notes;
  j["provenance"] = r.provenance;
  return j;
}

namespace detail {

inline std::string cell(const ReportRow& row, bool show_change) {
  std::string s = fixed2(row.stats.mean);
  if (row.stats.std) s += " (" + fixed2(*row.stats.std) + ")";
  if (show_change && row.relative_change) s += " " + format_percent(*row.relative_change);
  return s;
}

}  // namespace detail

/// Markdown rendering. Rows labelled `component@position` are pivoted into a
/// component x First/Middle/Last table.
inline std::string render_markdown(const ExperimentReport& r) {
  std::ostringstream os;
  os << "# " << (r.kind == "refinement" ? "Refinement" : "Sensitivity") << " report\n\n";
  os << "ROUGE-L x100, beta " << r.rouge.beta << ", lowercase " << (r.rouge.lowercase ? "yes" : "no")
     << ", punctuation " << (r.rouge.strip_punctuation ? "stripped" : "kept")
     << ", whitespace tokens, max over references.\n";
  os << "Relative change against `" << r.reference_label << "`.\n\n";

  const ReportRow* reference = nullptr;
  bool pivot = true;
  std::vector<std::string> components;
  for (const auto& row : r.rows) {
    if (row.label == r.reference_label) {
      reference = &row;
      continue;
    }
    const auto at = row.label.find('@');
    if (at == std::string::npos) {
      pivot = false;
      continue;
    }
    const auto comp = row.label.substr(0, at);
    if (std::find(components.begin(), components.end(), comp) == components.end()) components.push_back(comp);
  }
  if (pivot && !components.empty()) {
    if (reference) os << "Baseline: " << detail::cell(*reference, false) << "\n\n";
    os << "| Component | First | Middle | Last |\n|---|---|---|---|\n";
    for (const auto& comp : components) {
      os << "| " << comp;
      for (auto pos : {"first", "middle", "last"}) {
        const auto label = comp + "@" + pos;
        auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const ReportRow& x) { return x.label == label; });
        os << " | " << (it == r.rows.end() ? "-" : detail::cell(*it, true));
      }
      os << " |\n";
    }
  } else {
    os << "| Variant | Mean (Std) | Change |\n|---|---|---|\n";
    for (const auto& row : r.rows) {
      os << "| " << row.label << " | " << detail::cell(row, false) << " | "
         << (row.relative_change ? format_percent(*row.relative_change) : "-") << " |\n";
    }
  }
  if (r.anova) {
    os << "\nANOVA: F(" << r.anova->df_between << ", " << r.anova->df_within << ") = "
       << (r.anova->f_infinite() ? std::string("inf") : detail::fixed2(r.anova->f_stat)) << ", p = ";
    std::ostringstream p;
    p.precision(4);
    p << r.anova->p_value;
    os << p.str() << (r.anova->significant ? " (significant" : " (not significant") << " at alpha "
       << r.anova->alpha << ")\n";
  }
  for (const auto& n : r.notes) os << "\nNote: " << n << "\n";
  if (!r.provenance.empty()) {
    os << "\n";
    for (const auto& [k, v] : r.provenance.items()) {
      os << "- " << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    }
  }
  return os.str();
}

namespace detail {

struct ChatJob {
  std::size_t group = 0;
  ChatRequest request;
  std::vector<std::string> references;
};

struct JobResult {
  std::string digest;
  std::string response;
  double score = 0;
};

/// Runs jobs on up to `jobs` threads; results line up with the input.
inline std::vector<JobResult> run_jobs(Gateway& gw, const std::vector<ChatJob>& work, std::size_t jobs,
                                       const RougeConfig& rouge) {
  std::vector<JobResult> out(work.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      {
        std::lock_guard lock(failure_mu);
        if (failure) return;
      }
      try {
        out[i].digest = request_digest(work[i].request);
        out[i].response = gw.chat(work[i].request);
        out[i].score = 100.0 * rouge_l_multi(work[i].references, out[i].response, rouge);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, work.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline std::string results_digest(const std::vector<JobResult>& results) {
  Sha256 h;
  for (const auto& r : results) h.field(r.digest).field(r.response);
  return h.hex();
}

inline void finish_report(ExperimentReport& report, const std::vector<ChatJob>& work,
                          const std::vector<JobResult>& results, double alpha) {
  for (std::size_t i = 0; i < work.size(); ++i) report.rows[work[i].group].scores.push_back(results[i].score);
  const ReportRow* reference = nullptr;
  for (auto& row : report.rows) {
    row.stats = descriptive(row.scores);
    if (row.label == report.reference_label) reference = &row;
  }
  for (auto& row : report.rows) {
    if (!reference || &row == reference) continue;
    if (reference->stats.mean == 0.0) {
      if (report.notes.empty() || report.notes.back().find("zero") == std::string::npos) {
        report.notes.push_back("reference mean is zero; relative changes are undefined");
      }
      continue;
    }
    row.relative_change = relative_change(reference->stats.mean, row.stats.mean);
  }
  std::vector<std::vector<double>> groups;
  bool enough = report.rows.size() >= 2;
  for (const auto& row : report.rows) {
    if (row.scores.size() < 2) enough = false;
    groups.push_back(row.scores);
  }
  if (enough) {
    report.anova = one_way_anova(groups, alpha);
  } else {
    report.notes.push_back("ANOVA skipped: needs two or more groups with two or more runs each");
  }
  report.provenance["transcript_digest"] = results_digest(results);
}

}  // namespace detail

inline std::string config_digest(const nlohmann::json& config) { return sha256_hex(config.dump()); }

struct RefinementConfig {
  std::vector<Strategy> strategies{Strategy::Default, Strategy::Cot, Strategy::Taxonomy};
  std::size_t shots = 2;
  std::size_t variants = 5;           // taxonomy refinements per task
  std::size_t instances = 10;         // sampled per task
  double refine_temperature = 0.7;
  double inference_temperature = 0.0;
  std::int64_t seed = 0;
  std::string backend = std::string(kMockBackend);
  int max_output_tokens = 512;
  std::size_t jobs = 1;
  double alpha = 0.05;
  RougeConfig rouge;

  nlohmann::json to_json() const {
    nlohmann::json s = nlohmann::json::array();
    for (auto x : strategies) s.push_back(std::string(to_string(x)));
    return {{"strategies", s},
            {"shots", shots},
            {"variants", variants},
            {"instances", instances},
            {"refine_temperature", refine_temperature},
            {"inference_temperature", inference_temperature},
            {"seed", seed},
            {"backend", backend},
            {"max_output_tokens", max_output_tokens},
            {"alpha", alpha},
            {"rouge", {{"beta", rouge.beta}, {"lowercase", rouge.lowercase}, {"strip_punctuation", rouge.strip_punctuation}}}};
  }
};

/// Default, chain-of-thought and taxonomy-refined instructions scored on the
/// same sampled instances. Relative changes are measured against CoT when it
/// is run, otherwise against the first strategy.
inline ExperimentReport run_refinement(const TaskBundle& task, const RefinementConfig& cfg, Gateway& gw,
                                       const TagRegistry& registry = TagRegistry::builtin()) {
  if (cfg.strategies.empty()) throw Error(Errc::InvalidConfig, "no strategies selected");
  ExperimentReport report;
  report.kind = "refinement";
  report.rouge = cfg.rouge;
  const bool has_cot = std::find(cfg.strategies.begin(), cfg.strategies.end(), Strategy::Cot) != cfg.strategies.end();
  report.reference_label = std::string(to_string(has_cot ? Strategy::Cot : cfg.strategies.front()));

  const auto picked = sample_instances(task.instances.size(), cfg.instances, static_cast<std::uint64_t>(cfg.seed));

  std::vector<detail::ChatJob> work;
  std::int64_t job_seed = cfg.seed;
  auto add_jobs = [&](std::size_t group, const std::string& instruction) {
    for (auto idx : picked) {
      const auto& inst = task.instances[idx];
      ChatRequest req = ChatRequest::user(assemble_inference_prompt(instruction, task, cfg.shots, inst),
                                          cfg.inference_temperature, job_seed++);
      req.backend = cfg.backend;
      req.max_output_tokens = cfg.max_output_tokens;
      work.push_back(detail::ChatJob{group, std::move(req), inst.outputs});
    }
  };

  for (auto strategy : cfg.strategies) {
    const std::size_t group = report.rows.size();
    report.rows.push_back(ReportRow{std::string(to_string(strategy)), {}, {}, std::nullopt});
    switch (strategy) {
      case Strategy::Default:
        add_jobs(group, task.definition);
        break;
      case Strategy::Cot:
        add_jobs(group, cot_instruction(task.definition));
        break;
      case Strategy::Taxonomy: {
        RefinementOptions ro;
        ro.chat.backend = cfg.backend;
        ro.chat.temperature = cfg.refine_temperature;
        ro.base_seed = cfg.seed;
        const auto variants = generate_refinements(gw, task.definition,
                                                   render_exemplars(task.positive_examples, "Positive Example"),
                                                   render_exemplars(task.negative_examples, "Negative Example"),
                                                   cfg.variants, registry, ro);
        for (const auto& v : variants) add_jobs(group, v);
        break;
      }
    }
  }

  const auto results = detail::run_jobs(gw, work, cfg.jobs, cfg.rouge);
  detail::finish_report(report, work, results, cfg.alpha);
  report.provenance["config_digest"] = config_digest(cfg.to_json());
  report.provenance["task"] = task.name;
  report.provenance["template_version"] = std::string(templates::kTemplateVersion);
  report.provenance["registry_fingerprint"] = registry.fingerprint();
  return report;
}

/// Annotated prompt with an `{input}` placeholder plus scored instances.
struct SensitivityTask {
  std::string name;
  Prompt prompt;
  std::vector<Instance> instances;
  std::optional<std::size_t> message;  // defaults to the last user message

  static SensitivityTask from_json(const nlohmann::json& j) {
    try {
      SensitivityTask t;
      t.name = j.value("name", "");
      t.prompt = prompt_from_json(j.at("prompt"));
      if (j.contains("message") && !j.at("message").is_null()) t.message = j.at("message").get<std::size_t>();
      std::size_t n = 0;
      for (const auto& inst : j.at("instances")) {
        Instance i;
        i.id = inst.value("id", "instance-" + std::to_string(n++));
        i.input = inst.at("input").get<std::string>();
        const auto& outs = inst.at("outputs");
        i.outputs = outs.is_string() ? std::vector<std::string>{outs.get<std::string>()}
                                     : outs.get<std::vector<std::string>>();
        t.instances.push_back(std::move(i));
      }
      if (t.instances.empty()) throw Error(Errc::InvalidConfig, "sensitivity task has no instances");
      return t;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, std::string("sensitivity task: ") + e.what());
    }
  }

  static SensitivityTask from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open sensitivity task '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, "sensitivity task '" + path + "': " + e.what());
    }
  }
};

inline std::string substitute_input(std::string_view text, std::string_view input) {
  static constexpr std::string_view kSlot = "{input}";
  std::string out;
  std::size_t cursor = 0;
  for (auto pos = text.find(kSlot); pos != std::string_view::npos; pos = text.find(kSlot, cursor)) {
    out.append(text.substr(cursor, pos - cursor));
    out.append(input);
    cursor = pos + kSlot.size();
  }
  out.append(text.substr(cursor));
  return out;
}

struct SensitivityConfig {
  std::vector<std::pair<std::string, PerturbationSpec>> variants;  // baseline is added automatically
  std::size_t runs_per_variant = 50;
  std::int64_t seed = 0;
  double temperature = 0.0;
  std::string backend = std::string(kMockBackend);
  int max_output_tokens = 512;
  std::size_t jobs = 1;
  double alpha = 0.05;
  bool remove_tags = false;  // strip tags from every materialized prompt
  RougeConfig rouge;

  nlohmann::json to_json() const {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& [label, spec] : variants) v.push_back({{"label", label}, {"spec", spec.to_json()}});
    return {{"variants", v},
            {"runs_per_variant", runs_per_variant},
            {"seed", seed},
            {"temperature", temperature},
            {"backend", backend},
            {"max_output_tokens", max_output_tokens},
            {"alpha", alpha},
            {"remove_tags", remove_tags},
            {"rouge", {{"beta", rouge.beta}, {"lowercase", rouge.lowercase}, {"strip_punctuation", rouge.strip_punctuation}}}};
  }
};

inline constexpr std::string_view kBaselineLabel = "baseline";

/// Scores the baseline prompt and each perturbed variant. Run r of every
/// group uses instance r mod n and seed + r, so groups differ only in the
/// prompt. ANOVA covers all groups including the baseline.
inline ExperimentReport run_sensitivity(const SensitivityTask& task, const SensitivityConfig& cfg, Gateway& gw,
                                        const TagRegistry& registry = TagRegistry::builtin()) {
  if (cfg.runs_per_variant == 0) throw Error(Errc::InvalidConfig, "runs_per_variant must be positive");
  const AnnotatedPrompt ap = parse_annotated(task.prompt, registry);

  std::vector<std::pair<std::string, PerturbationSpec>> groups;
  PerturbationSpec base = PerturbationSpec::none();
  base.remove_tags = cfg.remove_tags;
  groups.emplace_back(std::string(kBaselineLabel), base);
  for (auto [label, spec] : cfg.variants) {
    if (label == kBaselineLabel) throw Error(Errc::InvalidConfig, "variant label 'baseline' is reserved");
    spec.remove_tags = spec.remove_tags || cfg.remove_tags;
    groups.emplace_back(std::move(label), std::move(spec));
  }

  ExperimentReport report;
  report.kind = "sensitivity";
  report.rouge = cfg.rouge;
  report.reference_label = std::string(kBaselineLabel);

  std::vector<detail::ChatJob> work;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    report.rows.push_back(ReportRow{groups[g].first, {}, {}, std::nullopt});
    const Prompt materialized = apply_perturbation(ap, groups[g].second, registry, task.message);
    for (std::size_t r = 0; r < cfg.runs_per_variant; ++r) {
      const auto& inst = task.instances[r % task.instances.size()];
      ChatRequest req;
      for (const auto& m : materialized.messages) req.messages.push_back(Message{m.role, substitute_input(m.content, inst.input)});
      req.temperature = cfg.temperature;
      req.seed = cfg.seed + static_cast<std::int64_t>(r);
      req.backend = cfg.backend;
      req.max_output_tokens = cfg.max_output_tokens;
      work.push_back(detail::ChatJob{g, std::move(req), inst.outputs});
    }
  }

  const auto results = detail::run_jobs(gw, work, cfg.jobs, cfg.rouge);
  detail::finish_report(report, work, results, cfg.alpha);
  report.provenance["config_digest"] = config_digest(cfg.to_json());
  report.provenance["task"] = task.name;
  report.provenance["registry_fingerprint"] = registry.fingerprint();
  return report;
}

}  // namespace promptprism
