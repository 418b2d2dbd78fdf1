#pragma once

// Four-dimension dataset profile (structural, semantic, syntactic, metadata)
// built from per-record singletons and combined with an associative,
// commutative merge. Proportions are derived from counters at render time.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "promptprism/dataset.hpp"
#include "promptprism/errors.hpp"
#include "promptprism/prompt_model.hpp"
#include "promptprism/syntax.hpp"
#include "promptprism/taxonomy.hpp"
#include "promptprism/templates.hpp"

namespace promptprism {

using Counter = std::map<std::string, std::uint64_t>;

struct TreeMetrics {
  std::size_t depth = 0;
  std::size_t width = 0;
  std::size_t node_count = 0;

  friend bool operator==(const TreeMetrics&, const TreeMetrics&) = default;
};

/// Tree induced by the tags and all their prefixes (root excluded).
/// Width is the largest number of nodes on one depth level.
inline TreeMetrics tree_metrics(const std::set<TagPath>& tags) {
  std::set<std::string> nodes;
  std::map<std::size_t, std::size_t> per_level;
  TreeMetrics m;
  for (const auto& t : tags) {
    for (std::size_t d = 1; d <= t.depth(); ++d) {
      if (nodes.insert(t.prefix(d).str()).second) ++per_level[d];
    }
    m.depth = std::max(m.depth, t.depth());
  }
  m.node_count = nodes.size();
  for (const auto& [level, count] : per_level) m.width = std::max(m.width, count);
  return m;
}

struct StructuralStats {
  Counter turn_type;                   // single / multi
  Counter role_sequence_pattern;       // "system→user→assistant"
  std::set<std::string> unique_roles;
  std::uint64_t user_turns = 0;        // summed over records

  friend bool operator==(const StructuralStats&, const StructuralStats&) = default;
};

struct SemanticStats {
  Counter tag_frequency;
  std::uint64_t depth_sum = 0;
  std::uint64_t width_sum = 0;
  std::uint64_t node_sum = 0;

  friend bool operator==(const SemanticStats&, const SemanticStats&) = default;
};

struct SyntacticStats {
  Counter delimiter;
  Counter prefix;
  Counter suffix;
  Counter special_tokens;

  friend bool operator==(const SyntacticStats&, const SyntacticStats&) = default;
};

struct MetadataStats {
  Counter task_type;
  Counter language;
  std::map<std::uint64_t, std::uint64_t> token_lengths;  // length -> records

  friend bool operator==(const MetadataStats&, const MetadataStats&) = default;
};

struct TokenLengthSummary {
  double mean = 0;
  std::uint64_t p50 = 0;
  std::uint64_t p95 = 0;
};

struct DatasetProfile {
  std::string registry_fingerprint;  // empty only for the identity profile
  std::uint64_t record_count = 0;
  StructuralStats structural;
  SemanticStats semantic;
  SyntacticStats syntactic;
  MetadataStats metadata;
  Counter warning_counts;

  double mean_turns() const { return record_count ? double(structural.user_turns) / double(record_count) : 0.0; }
  double mean_tree_depth() const { return record_count ? double(semantic.depth_sum) / double(record_count) : 0.0; }
  double mean_tree_width() const { return record_count ? double(semantic.width_sum) / double(record_count) : 0.0; }
  double mean_node_count() const { return record_count ? double(semantic.node_sum) / double(record_count) : 0.0; }

  /// Up to three most frequent tags; ties by canonical text ascending.
  std::vector<std::string> top3_tags() const {
    std::vector<std::pair<std::string, std::uint64_t>> v(semantic.tag_frequency.begin(), semantic.tag_frequency.end());
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size() && i < 3; ++i) out.push_back(v[i].first);
    return out;
  }

  TokenLengthSummary token_length_summary() const {
    TokenLengthSummary s;
    std::uint64_t n = 0;
    double total = 0;
    for (const auto& [len, count] : metadata.token_lengths) {
      n += count;
      total += double(len) * double(count);
    }
    if (n == 0) return s;
    s.mean = total / double(n);
    auto nearest_rank = [&](double q) {
      const auto rank = static_cast<std::uint64_t>(std::ceil(q * double(n)));
      std::uint64_t seen = 0;
      for (const auto& [len, count] : metadata.token_lengths) {
        seen += count;
        if (seen >= std::max<std::uint64_t>(rank, 1)) return len;
      }
      return metadata.token_lengths.rbegin()->first;
    };
    s.p50 = nearest_rank(0.50);
    s.p95 = nearest_rank(0.95);
    return s;
  }

  friend bool operator==(const DatasetProfile&, const DatasetProfile&) = default;
};

/// Proportions from counts; empty when there are no observations.
inline std::map<std::string, double> distribution(const Counter& counts) {
  std::uint64_t total = 0;
  for (const auto& [k, v] : counts) total += v;
  std::map<std::string, double> out;
  if (total == 0) return out;
  for (const auto& [k, v] : counts) out[k] = double(v) / double(total);
  return out;
}

/// Kinds by proportion descending, ties by name ascending.
inline std::vector<std::pair<std::string, double>> top_kinds(const Counter& counts, std::size_t n) {
  const auto dist = distribution(counts);
  std::vector<std::pair<std::string, double>> v(dist.begin(), dist.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (v.size() > n) v.resize(n);
  return v;
}

inline void add_counts(Counter& into, const Counter& from) {
  for (const auto& [k, v] : from) into[k] += v;
}

inline DatasetProfile merge(DatasetProfile a, const DatasetProfile& b) {
  if (!a.registry_fingerprint.empty() && !b.registry_fingerprint.empty() &&
      a.registry_fingerprint != b.registry_fingerprint) {
    throw Error(Errc::RegistryMismatch, "profiles were built against different tag registries");
  }
  if (a.registry_fingerprint.empty()) a.registry_fingerprint = b.registry_fingerprint;
  a.record_count += b.record_count;
  add_counts(a.structural.turn_type, b.structural.turn_type);
  add_counts(a.structural.role_sequence_pattern, b.structural.role_sequence_pattern);
  a.structural.unique_roles.insert(b.structural.unique_roles.begin(), b.structural.unique_roles.end());
  a.structural.user_turns += b.structural.user_turns;
  add_counts(a.semantic.tag_frequency, b.semantic.tag_frequency);
  a.semantic.depth_sum += b.semantic.depth_sum;
  a.semantic.width_sum += b.semantic.width_sum;
  a.semantic.node_sum += b.semantic.node_sum;
  add_counts(a.syntactic.delimiter, b.syntactic.delimiter);
  add_counts(a.syntactic.prefix, b.syntactic.prefix);
  add_counts(a.syntactic.suffix, b.syntactic.suffix);
  add_counts(a.syntactic.special_tokens, b.syntactic.special_tokens);
  add_counts(a.metadata.task_type, b.metadata.task_type);
  add_counts(a.metadata.language, b.metadata.language);
  for (const auto& [len, count] : b.metadata.token_lengths) a.metadata.token_lengths[len] += count;
  add_counts(a.warning_counts, b.warning_counts);
  return a;
}

/// Whitespace token count (Unicode whitespace).
inline std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const bool space = unicode::is_space(unicode::decode_one(text, pos));
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

struct ProfileOptions {
  std::string registry_fingerprint;
  std::function<std::size_t(std::string_view)> tokenizer = whitespace_token_count;
  /// Returns a language code; unset means every record is "und".
  std::function<std::string(std::string_view)> language_detector;
  SyntaxConfig syntax;
};

/// Per-record labels that do not come from the prompt text itself.
struct RecordLabels {
  std::optional<std::string> task_type;
  std::optional<std::string> language;
};

inline constexpr std::string_view kRoleArrow = "→";

/// Singleton profile of one parsed record. Multi-turn records (two or more
/// user messages) contribute the last user message plus a historical_context
/// node; single-turn records contribute every message.
inline DatasetProfile profile_record(const AnnotatedPrompt& ap, const ProfileOptions& opts = {},
                                     const RecordLabels& labels = {}) {
  DatasetProfile p;
  p.registry_fingerprint = opts.registry_fingerprint;
  p.record_count = 1;

  std::string pattern;
  std::size_t users = 0;
  for (const auto& m : ap.messages) {
    if (!pattern.empty()) pattern += kRoleArrow;
    pattern += m.role;
    p.structural.unique_roles.insert(m.role);
    if (m.role == kRoleUser) ++users;
  }
  const bool multi = users >= 2;
  p.structural.turn_type[multi ? "multi" : "single"] = 1;
  p.structural.role_sequence_pattern[pattern] = 1;
  p.structural.user_turns = users;

  std::vector<const AnnotatedMessage*> scope;
  std::set<TagPath> tags;
  if (multi) {
    for (std::size_t i = ap.messages.size(); i-- > 0;) {
      if (ap.messages[i].role == kRoleUser) {
        scope.push_back(&ap.messages[i]);
        if (i > 0) {
          const auto history = TagPath::parse("historical_context");
          tags.insert(history);
          p.semantic.tag_frequency[history.str()] += 1;
        }
        break;
      }
    }
  } else {
    for (const auto& m : ap.messages) scope.push_back(&m);
  }

  for (const auto* m : scope) {
    for (const auto& c : m->components) {
      tags.insert(c.tag);
      p.semantic.tag_frequency[c.tag.str()] += 1;
      const ComponentMarkers md =
          c.metadata ? *c.metadata
                     : ComponentMarkers{detect_markers(c.content, opts.syntax), analyze_delimiter(c.delimiter_after)};
      p.syntactic.delimiter[md.delimiter ? std::string(to_string(md.delimiter->kind)) : "none"] += 1;
      p.syntactic.prefix[std::string(to_string(md.markers.prefix))] += 1;
      p.syntactic.suffix[std::string(to_string(md.markers.suffix))] += 1;
      if (md.markers.special_tokens.empty()) {
        p.syntactic.special_tokens["none"] += 1;
      } else {
        for (const auto& [kind, n] : md.markers.special_tokens) p.syntactic.special_tokens[kind] += n;
      }
    }
  }

  const TreeMetrics tm = tree_metrics(tags);
  p.semantic.depth_sum = tm.depth;
  p.semantic.width_sum = tm.width;
  p.semantic.node_sum = tm.node_count;

  std::string text;
  for (const auto& m : ap.messages) {
    if (!text.empty()) text += '\n';
    text += m.detagged_text();
  }
  p.metadata.token_lengths[opts.tokenizer ? opts.tokenizer(text) : whitespace_token_count(text)] = 1;
  std::string language = labels.language.value_or(opts.language_detector ? opts.language_detector(text) : "und");
  p.metadata.language[language.empty() ? "und" : language] = 1;
  if (labels.task_type) {
    if (templates::is_task_type(*labels.task_type)) {
      p.metadata.task_type[*labels.task_type] = 1;
    } else {
      p.metadata.task_type[std::string(templates::kOthers)] = 1;
      p.warning_counts["task_type_not_in_vocabulary"] = 1;
    }
  }
  if (auto unknown = ap.unknown_tag_count()) p.warning_counts["unknown_tags"] = unknown;
  return p;
}

enum class ReportFormat { Json, Markdown };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  throw Error(Errc::InvalidConfig, "unknown report format '" + std::string(s) + "' (json|markdown)");
}

inline double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

namespace detail {

inline nlohmann::json syntactic_section(const Counter& counts) {
  nlohmann::json j;
  j["counts"] = counts;
  j["distribution"] = distribution(counts);
  j["top3"] = nlohmann::json::array();
  for (const auto& [kind, share] : top_kinds(counts, 3)) {
    j["top3"].push_back({{"kind", kind}, {"proportion", round3(share)}});
  }
  return j;
}

}  // namespace detail

inline nlohmann::json profile_to_json(const DatasetProfile& p, const nlohmann::json& provenance = nullptr) {
  nlohmann::json j;
  j["schema"] = "promptprism_profile";
  j["version"] = 1;
  j["record_count"] = p.record_count;
  j["registry_fingerprint"] = p.registry_fingerprint;
  if (!provenance.is_null()) j["provenance"] = provenance;
  j["structural"] = {
      {"turn_type", p.structural.turn_type},
      {"role_sequence_pattern", p.structural.role_sequence_pattern},
      {"unique_roles", p.structural.unique_roles},
      {"mean_turns", p.mean_turns()},
  };
  j["semantic"] = {
      {"tag_frequency", p.semantic.tag_frequency},
      {"top3", p.top3_tags()},
      {"mean_tree_width", p.mean_tree_width()},
      {"mean_tree_depth", p.mean_tree_depth()},
      {"mean_node_count", p.mean_node_count()},
  };
  j["syntactic"] = {
      {"delimiter", detail::syntactic_section(p.syntactic.delimiter)},
      {"prefix", detail::syntactic_section(p.syntactic.prefix)},
      {"suffix", detail::syntactic_section(p.syntactic.suffix)},
      {"special_tokens", detail::syntactic_section(p.syntactic.special_tokens)},
  };
  const auto tl = p.token_length_summary();
  j["metadata"] = {
      {"task_type", p.metadata.task_type},
      {"language", p.metadata.language},
      {"token_length", {{"mean", tl.mean}, {"p50", tl.p50}, {"p95", tl.p95}, {"tokenizer", "whitespace"}}},
      {"modality", "text"},
  };
  j["warning_counts"] = p.warning_counts;
  return j;
}

namespace detail {

inline std::string fmt3(double x) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << x;
  return os.str();
}

inline void markdown_counter(std::ostringstream& os, const Counter& c, std::string_view label) {
  os << "| " << label << " | count |\n|---|---|\n";
  for (const auto& [k, v] : c) os << "| " << k << " | " << v << " |\n";
  os << "\n";
}

}  // namespace detail

inline std::string render_report(const DatasetProfile& p, ReportFormat format,
                                 const nlohmann::json& provenance = nullptr) {
  if (format == ReportFormat::Json) return profile_to_json(p, provenance).dump(2) + "\n";
  std::ostringstream os;
  os << "# Dataset Profile\n\n";
  os << "- schema: promptprism_profile v1\n";
  os << "- record_count: " << p.record_count << "\n";
  os << "- registry_fingerprint: " << (p.registry_fingerprint.empty() ? "-" : p.registry_fingerprint) << "\n";
  if (!provenance.is_null()) {
    for (const auto& [k, v] : provenance.items()) {
      if (k == "registry_fingerprint" && v == p.registry_fingerprint) continue;
      os << "- " << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    }
  }
  os << "\n## Structural\n\n";
  os << "- mean_turns: " << detail::fmt3(p.mean_turns()) << "\n";
  os << "- unique_roles:";
  for (const auto& r : p.structural.unique_roles) os << " " << r;
  os << "\n\n";
  detail::markdown_counter(os, p.structural.turn_type, "turn_type");
  detail::markdown_counter(os, p.structural.role_sequence_pattern, "role_sequence_pattern");
  os << "## Semantic\n\n";
  os << "- top3:";
  for (const auto& t : p.top3_tags()) os << " " << t;
  os << "\n- mean_tree_width: " << detail::fmt3(p.mean_tree_width()) << "\n";
  os << "- mean_tree_depth: " << detail::fmt3(p.mean_tree_depth()) << "\n";
  os << "- mean_node_count: " << detail::fmt3(p.mean_node_count()) << "\n\n";
  detail::markdown_counter(os, p.semantic.tag_frequency, "tag");
  os << "## Syntactic\n\n| dimension | 1st | 2nd | 3rd |\n|---|---|---|---|\n";
  const std::pair<std::string_view, const Counter*> dims[] = {{"delimiter", &p.syntactic.delimiter},
                                                               {"suffix", &p.syntactic.suffix},
                                                               {"prefix", &p.syntactic.prefix},
                                                               {"special_tokens", &p.syntactic.special_tokens}};
  for (const auto& [name, counts] : dims) {
    os << "| " << name;
    const auto top = top_kinds(*counts, 3);
    for (std::size_t i = 0; i < 3; ++i) {
      if (i < top.size()) {
        os << " | " << top[i].first << " " << detail::fmt3(round3(top[i].second));
      } else {
        os << " | -";
      }
    }
    os << " |\n";
  }
  os << "\n## Metadata\n\n";
  const auto tl = p.token_length_summary();
  os << "- modality: text\n";
  os << "- token_length: mean " << detail::fmt3(tl.mean) << ", p50 " << tl.p50 << ", p95 " << tl.p95
     << " (whitespace)\n\n";
  detail::markdown_counter(os, p.metadata.task_type, "task_type");
  detail::markdown_counter(os, p.metadata.language, "language");
  if (!p.warning_counts.empty()) {
    os << "## Warnings\n\n";
    detail::markdown_counter(os, p.warning_counts, "warning");
  }
  return os.str();
}

struct CorpusScanOptions {
  bool lenient = true;
  std::size_t jobs = 1;
  std::size_t batch_size = 1024;
};

struct CorpusScanResult {
  DatasetProfile profile;
  std::vector<std::string> errors;  // "line N: ..." for skipped records
};

/// Streams a JSONL corpus into a profile. Records are processed in batches,
/// fanned out over `jobs` workers and merged in line order. In strict mode
/// the first bad record throws; in lenient mode it is skipped and counted.
inline CorpusScanResult profile_stream(std::istream& in, const TagRegistry& registry, const ProfileOptions& opts,
                                       const CorpusScanOptions& scan = {}) {
  CorpusScanResult result;
  result.profile.registry_fingerprint = opts.registry_fingerprint;
  JsonlReader reader(in);

  struct Item {
    std::optional<JsonlRecord> record;
    std::string error;
  };
  struct Outcome {
    std::optional<DatasetProfile> profile;
    std::string error;
  };

  auto process = [&](const Item& item) -> Outcome {
    if (!item.record) return {std::nullopt, item.error};
    const auto& rec = *item.record;
    try {
      AnnotatedPrompt ap;
      if (scan.lenient) {
        auto lp = parse_annotated_lenient(rec.prompt, registry);
        ap = std::move(lp.prompt);
      } else {
        ap = parse_annotated(rec.prompt, registry);
      }
      annotate_markers_in_place(ap, opts.syntax);
      RecordLabels labels;
      if (auto it = rec.json.find("task_type"); it != rec.json.end() && it->is_string()) {
        labels.task_type = it->get<std::string>();
      }
      if (auto it = rec.json.find("language"); it != rec.json.end() && it->is_string()) {
        labels.language = it->get<std::string>();
      }
      return {profile_record(ap, opts, labels), {}};
    } catch (const Error& e) {
      return {std::nullopt, "line " + std::to_string(rec.line_number) + ": " + e.what()};
    }
  };

  bool done = false;
  while (!done) {
    std::vector<Item> batch;
    while (batch.size() < std::max<std::size_t>(scan.batch_size, 1)) {
      try {
        auto rec = reader.next();
        if (!rec) {
          done = true;
          break;
        }
        batch.push_back(Item{std::move(rec), {}});
      } catch (const Error& e) {
        if (!scan.lenient) throw;
        batch.push_back(Item{std::nullopt, e.what()});
      }
    }
    std::vector<Outcome> outcomes(batch.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(scan.jobs, batch.size()));
    if (workers <= 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) outcomes[i] = process(batch[i]);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < batch.size(); i += workers) outcomes[i] = process(batch[i]);
        });
      }
      for (auto& t : pool) t.join();
    }
    for (auto& o : outcomes) {
      if (o.profile) {
        result.profile = merge(std::move(result.profile), *o.profile);
      } else {
        if (!scan.lenient) throw Error(Errc::MalformedRecord, o.error);
        result.errors.push_back(o.error);
        result.profile.warning_counts["skipped_records"] += 1;
      }
    }
  }
  return result;
}

}  // namespace promptprism
