#pragma once

// Meta-prompt workflows on top of the gateway: semantic annotation, task-type
// classification and taxonomy-guided refinement, plus the mechanical
// format-correctness check and the human review sheet.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "promptprism/errors.hpp"
#include "promptprism/llm_gateway.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/taxonomy.hpp"
#include "promptprism/templates.hpp"
#include "promptprism/unicode.hpp"

namespace promptprism {

/// One line per registered tag, "<path>: description", in canonical order.
inline std::string taxonomy_listing(const TagRegistry& registry) {
  std::string out;
  for (const auto& p : registry.paths()) {
    out += "- <" + p.str() + ">";
    const auto desc = registry.description(p.str());
    if (!desc.empty()) out += ": " + desc;
    out += '\n';
  }
  return out;
}

struct WorkflowOptions {
  std::string backend = std::string(kMockBackend);
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::optional<std::int64_t> seed;
};

namespace detail {

inline ChatRequest make_request(std::string content, const WorkflowOptions& opts,
                                std::optional<std::int64_t> seed) {
  ChatRequest r = ChatRequest::user(std::move(content), opts.temperature, seed);
  r.max_output_tokens = opts.max_output_tokens;
  r.backend = opts.backend;
  return r;
}

/// Drops a markdown code fence wrapped around the whole reply.
inline std::string unfence(std::string text) {
  const auto t = unicode::trim_ascii(text);
  if (t.size() >= 6 && t.substr(0, 3) == "```" && t.substr(t.size() - 3) == "```") {
    const auto nl = t.find('\n');
    if (nl != std::string_view::npos && nl < t.size() - 3) {
      std::string inner(t.substr(nl + 1, t.size() - 3 - (nl + 1)));
      if (!inner.empty() && inner.back() == '\n') inner.pop_back();
      return inner;
    }
  }
  return text;
}

}  // namespace detail

inline std::string build_annotation_prompt(std::string_view text, const TagRegistry& registry) {
  return templates::fill_template(templates::kAnnotationTemplate,
                                  {{"prompt_taxonomy", taxonomy_listing(registry)},
                                   {"example_input_prompt", std::string(templates::kAnnotationExampleInput)},
                                   {"example_output", std::string(templates::kAnnotationExampleOutput)},
                                   {"input_prompt_to_be_annotated", std::string(text)}});
}

struct AnnotationResult {
  Prompt tagged;
  AnnotatedPrompt parsed;  // lenient parse of `tagged`
  ParseDiagnostics diagnostics;
};

/// Annotates every non-empty message with one chat call. The reply is parsed
/// leniently; malformed markup shows up in `diagnostics`.
inline AnnotationResult annotate_prompt(Gateway& gw, const Prompt& raw, const TagRegistry& registry,
                                        const WorkflowOptions& opts = {}) {
  AnnotationResult result;
  result.tagged.id = raw.id;
  for (const auto& m : raw.messages) {
    if (unicode::trim_ascii(m.content).empty()) {
      result.tagged.messages.push_back(m);
      continue;
    }
    auto reply = gw.chat(detail::make_request(build_annotation_prompt(m.content, registry), opts, opts.seed));
    result.tagged.messages.push_back(Message{m.role, detail::unfence(std::move(reply))});
  }
  auto lp = parse_annotated_lenient(result.tagged, registry);
  result.parsed = std::move(lp.prompt);
  result.diagnostics = std::move(lp.diagnostics);
  if (result.parsed.component_count() == 0) {
    throw Error(Errc::AnnotationUnparseable, "annotation produced no recognizable tagged component");
  }
  return result;
}

inline std::string build_task_type_prompt(std::string_view text) {
  return templates::fill_template(templates::kTaskTypeTemplate,
                                  {{"example task instruction", std::string(templates::kTaskTypeExampleInput)},
                                   {"task type", std::string(templates::kTaskTypeExampleOutput)},
                                   {"input_prompt_to_be_annotated", std::string(text)}});
}

struct TaskTypeLabel {
  std::string value = std::string(templates::kOthers);
  std::vector<std::string> warnings;
};

/// Maps raw classifier output onto the closed vocabulary. Matching is exact
/// and case-sensitive after trimming whitespace and surrounding quotes.
inline TaskTypeLabel normalize_task_type(std::string_view raw) {
  TaskTypeLabel label;
  std::vector<std::string> lines;
  std::istringstream in{std::string(raw)};
  for (std::string line; std::getline(in, line);) {
    auto t = unicode::trim_ascii(line);
    while (t.size() >= 2 && (t.front() == '"' || t.front() == '\'' || t.front() == '`') && t.back() == t.front()) {
      t = unicode::trim_ascii(t.substr(1, t.size() - 2));
    }
    if (!t.empty()) lines.emplace_back(t);
  }
  if (lines.size() > 1) label.warnings.push_back("classifier returned " + std::to_string(lines.size()) + " lines");
  for (const auto& l : lines) {
    if (templates::is_task_type(l)) {
      label.value = l;
      return label;
    }
  }
  for (const auto& l : lines) {
    const auto lower = unicode::ascii_lower(l);
    for (auto v : templates::kTaskTypes) {
      if (unicode::ascii_lower(v) == lower) {
        label.warnings.push_back("label '" + l + "' differs from '" + std::string(v) + "' only in case");
        return label;
      }
    }
  }
  label.warnings.push_back(lines.empty() ? "classifier returned no label"
                                         : "label '" + lines.front() + "' is not in the vocabulary");
  return label;
}

inline TaskTypeLabel classify_task(Gateway& gw, const Prompt& prompt, const WorkflowOptions& opts = {}) {
  std::string text;
  for (const auto& m : prompt.messages) {
    if (!text.empty()) text += "\n\n";
    text += m.role + ": " + m.content;
  }
  return normalize_task_type(gw.chat(detail::make_request(build_task_type_prompt(text), opts, opts.seed)));
}

inline std::string build_refinement_prompt(std::string_view definition, std::string_view positive_examples,
                                           std::string_view negative_examples) {
  return templates::fill_template(templates::kRefinementTemplate,
                                  {{"definition", std::string(definition)},
                                   {"positive_examples", std::string(positive_examples)},
                                   {"negative_examples", std::string(negative_examples)}});
}

struct RefinementOptions {
  WorkflowOptions chat{std::string(kMockBackend), 0.7, 2048, std::nullopt};
  std::int64_t base_seed = 0;
  /// Total chat attempts allowed; 0 means 2k.
  std::size_t attempt_budget = 0;
};

/// k independent refinements of a base instruction. Attempt i uses seed
/// base_seed + i. Replies without any registered tagged component are
/// dropped and re-sampled until the attempt budget runs out.
inline std::vector<std::string> generate_refinements(Gateway& gw, std::string_view base_instruction,
                                                     std::string_view positive_examples,
                                                     std::string_view negative_examples, std::size_t k,
                                                     const TagRegistry& registry, const RefinementOptions& opts = {}) {
  if (k == 0) throw Error(Errc::InvalidConfig, "k must be at least 1");
  const std::string meta = build_refinement_prompt(base_instruction, positive_examples, negative_examples);
  const std::size_t budget = std::max(k, opts.attempt_budget ? opts.attempt_budget : 2 * k);
  std::vector<std::string> variants;
  for (std::size_t attempt = 0; attempt < budget && variants.size() < k; ++attempt) {
    auto reply = detail::unfence(
        gw.chat(detail::make_request(meta, opts.chat, opts.base_seed + static_cast<std::int64_t>(attempt))));
    Prompt p;
    p.messages.push_back(Message{std::string(kRoleUser), reply});
    if (parse_annotated_lenient(p, registry).prompt.component_count() > 0) variants.push_back(std::move(reply));
  }
  if (variants.size() < k) {
    throw Error(Errc::InsufficientVariants, "only " + std::to_string(variants.size()) + " of " + std::to_string(k) +
                                                " refinements parsed as tagged prompts within " +
                                                std::to_string(budget) + " attempts");
  }
  return variants;
}

struct FormatCorrectness {
  double ratio = 1.0;
  std::size_t matched = 0;
  std::size_t unclosed = 0;
  std::size_t orphan_closes = 0;
  bool no_tags = false;  // ratio is 1.0 by convention

  std::size_t intended() const { return matched + unclosed + orphan_closes; }
};

/// Share of intended tag pairs that are properly matched. Open tags are
/// matched to closes with a stack; a close pops back to its opener, and the
/// openers it skips count as unclosed. A close with no opener counts as one
/// intended pair on its own.
inline FormatCorrectness format_correctness(std::string_view tagged, const TagRegistry& registry) {
  FormatCorrectness fc;
  std::vector<std::string> stack;
  for (const auto& tok : detail::scan_tags(tagged, registry)) {
    if (!tok.closing) {
      stack.push_back(tok.name);
      continue;
    }
    auto it = std::find(stack.rbegin(), stack.rend(), tok.name);
    if (it == stack.rend()) {
      ++fc.orphan_closes;
      continue;
    }
    const auto keep = static_cast<std::size_t>(stack.rend() - it) - 1;
    fc.unclosed += stack.size() - keep - 1;
    stack.resize(keep);
    ++fc.matched;
  }
  fc.unclosed += stack.size();
  if (fc.intended() == 0) {
    fc.no_tags = true;
    fc.ratio = 1.0;
  } else {
    fc.ratio = double(fc.matched) / double(fc.intended());
  }
  return fc;
}

inline FormatCorrectness format_correctness(const Prompt& tagged, const TagRegistry& registry) {
  FormatCorrectness total;
  for (const auto& m : tagged.messages) {
    auto fc = format_correctness(m.content, registry);
    total.matched += fc.matched;
    total.unclosed += fc.unclosed;
    total.orphan_closes += fc.orphan_closes;
  }
  total.no_tags = total.intended() == 0;
  total.ratio = total.no_tags ? 1.0 : double(total.matched) / double(total.intended());
  return total;
}

enum class Strategy { Default, Cot, Taxonomy };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Default: return "default";
    case Strategy::Cot: return "cot";
    case Strategy::Taxonomy: return "taxonomy";
  }
  return "default";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "default") return Strategy::Default;
  if (s == "cot") return Strategy::Cot;
  if (s == "taxonomy") return Strategy::Taxonomy;
  throw Error(Errc::InvalidConfig, "unknown strategy '" + std::string(s) + "' (default|cot|taxonomy)");
}

/// Chain-of-thought baseline: the base instruction with the fixed suffix.
inline std::string cot_instruction(std::string_view base) {
  std::string out(base);
  if (!out.empty() && !unicode::is_space(static_cast<unsigned char>(out.back()))) out += ' ';
  out += templates::kCotSuffix;
  return out;
}

namespace detail {

inline std::string csv_field(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

inline constexpr std::string_view kReviewSheetHeader =
    "record,message,role,component,tag,content,tag_correct,coverage_note\n";

/// Review rows for human scoring of tag correctness and coverage. The last
/// two columns are left blank for the reviewer.
inline std::string review_sheet_rows(const AnnotatedPrompt& ap, std::string_view record_id) {
  std::string out;
  for (std::size_t mi = 0; mi < ap.messages.size(); ++mi) {
    const auto& m = ap.messages[mi];
    for (std::size_t ci = 0; ci < m.components.size(); ++ci) {
      const auto& c = m.components[ci];
      out += detail::csv_field(record_id) + "," + std::to_string(mi) + "," + detail::csv_field(m.role) + "," +
             std::to_string(ci) + "," + detail::csv_field(c.tag.str()) + "," + detail::csv_field(c.content) + ",,\n";
    }
  }
  return out;
}

}  // namespace promptprism
