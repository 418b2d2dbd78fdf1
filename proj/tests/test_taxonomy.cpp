#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "promptprism/taxonomy.hpp"

using namespace promptprism;

namespace {

std::vector<std::string> canon(const std::vector<TagPath>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.str());
  return out;
}

}  // namespace

TEST(TagPath, ParsesSegmentsAndCanonicalText) {
  const auto p = TagPath::parse("instruction:guideline:cot");
  EXPECT_EQ(p.depth(), 3u);
  EXPECT_EQ(p.segments(), (std::vector<std::string>{"instruction", "guideline", "cot"}));
  EXPECT_EQ(p.str(), "instruction:guideline:cot");
  EXPECT_EQ(p.prefix(1).str(), "instruction");
  EXPECT_EQ(p.prefix(2).str(), "instruction:guideline");
  EXPECT_EQ(p.top().str(), "instruction");
}

TEST(TagPath, RejectsBadIdentifiers) {
  for (const char* bad : {"Bad Tag", "", "1abc", "a::b", ":a", "a:", "a-b", "Instruction", "a:B"}) {
    try {
      TagPath::parse(bad);
      ADD_FAILURE() << "accepted '" << bad << "'";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidIdentifier) << bad;
    }
  }
}

TEST(TagPath, DepthIsCappedAtThree) {
  try {
    TagPath::parse("a:b:c:d");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DepthExceeded);
  }
}

TEST(TagPath, SegmentWisePrefixMatch) {
  const auto tools = TagPath::parse("tools");
  EXPECT_TRUE(TagPath::parse("tools:tool_name").starts_with(tools));
  EXPECT_TRUE(tools.starts_with(tools));
  EXPECT_FALSE(TagPath::parse("tools_prompt").starts_with(tools));
}

TEST(Registry, BuiltinGoldenList) {
  const std::vector<std::string> golden = {
      "contextual_ref",
      "contextual_ref:context_for_task",
      "contextual_ref:fewshot",
      "contextual_ref:knowledge_base",
      "historical_context",
      "instruction",
      "instruction:guideline",
      "instruction:guideline:behavioral",
      "instruction:guideline:cot",
      "instruction:guideline:emotion",
      "instruction:guideline:role",
      "instruction:guideline:safety",
      "instruction:guideline:scenario",
      "instruction:task",
      "other",
      "other:adversarial",
      "output_const",
      "output_const:format",
      "output_const:label",
      "output_const:style_tone",
      "output_const:wordlimit",
      "request_query",
      "response",
      "response:answer",
      "response:peripheral_explanation",
      "system_prompt",
      "tools",
      "tools:parameters",
      "tools:tool_description",
      "tools:tool_name",
      "tools_prompt",
  };
  const auto reg = TagRegistry::builtin();
  EXPECT_EQ(canon(reg.paths()), golden);
  for (const auto& g : golden) EXPECT_FALSE(reg.description(g).empty()) << g;
}

TEST(Registry, BuiltinRolesAlwaysPresent) {
  for (const auto& reg : {TagRegistry::empty(), TagRegistry::builtin()}) {
    for (auto r : {"system", "user", "assistant", "tools"}) {
      EXPECT_TRUE(reg.has_role(r));
      EXPECT_TRUE(reg.roles().at(r).builtin);
    }
  }
}

TEST(Registry, RegisterSingleNode) {
  const auto reg = register_tag(TagRegistry::empty(), "instruction", "top");
  EXPECT_EQ(reg.size(), 1u);
  EXPECT_TRUE(reg.contains("instruction"));
}

TEST(Registry, RegisterAddsEveryPrefix) {
  const auto reg = register_tag(TagRegistry::empty(), "instruction:guideline:cot", "");
  EXPECT_EQ(canon(reg.paths()),
            (std::vector<std::string>{"instruction", "instruction:guideline", "instruction:guideline:cot"}));
}

TEST(Registry, RegisterRejectsInvalidIdentifier) {
  try {
    register_tag(TagRegistry::empty(), "Bad Tag", "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidIdentifier);
  }
}

TEST(Registry, RegistrationIsIdempotent) {
  auto once = register_tag(TagRegistry::empty(), "a:b", "desc");
  auto twice = register_tag(once, "a:b", "desc");
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once.fingerprint(), twice.fingerprint());
}

TEST(Registry, ValidateResolvesRegisteredTags) {
  const auto reg = TagRegistry::builtin();
  EXPECT_EQ(validate_tag(reg, "contextual_ref:fewshot").segments(),
            (std::vector<std::string>{"contextual_ref", "fewshot"}));
  EXPECT_EQ(validate_tag(reg, "request_query").segments(), (std::vector<std::string>{"request_query"}));
  EXPECT_EQ(validate_tag(reg, "  Request_Query ").str(), "request_query");
}

TEST(Registry, ValidateRejectsUnknownTag) {
  try {
    validate_tag(TagRegistry::builtin(), "tool_call");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownTag);
    EXPECT_NE(std::string(e.what()).find("tool_call"), std::string::npos);
  }
}

TEST(Registry, CanonicalizationIsIdempotent) {
  const auto reg = TagRegistry::builtin();
  for (const auto& p : reg.paths()) EXPECT_EQ(reg.validate(p.str()), p);
}

TEST(Registry, PrefixClosure) {
  auto reg = TagRegistry::builtin();
  reg.add_tag(TagPath::parse("custom:deep:leaf"), "x");
  for (const auto& p : reg.paths()) {
    for (std::size_t d = 1; d <= p.depth(); ++d) EXPECT_TRUE(reg.contains(p.prefix(d))) << p.str();
  }
}

TEST(Registry, TopLevelCategories) {
  EXPECT_EQ(canon(top_level_categories(TagRegistry::builtin())),
            (std::vector<std::string>{"contextual_ref", "historical_context", "instruction", "other", "output_const",
                                      "request_query", "response", "system_prompt", "tools", "tools_prompt"}));
  EXPECT_TRUE(top_level_categories(TagRegistry::empty()).empty());
  EXPECT_EQ(canon(top_level_categories(register_tag(TagRegistry::empty(), "other:adversarial", ""))),
            (std::vector<std::string>{"other"}));
}

TEST(Registry, CustomRoles) {
  auto reg = TagRegistry::builtin();
  reg.add_role("developer");
  EXPECT_TRUE(reg.has_role("developer"));
  EXPECT_FALSE(reg.roles().at("developer").builtin);
  EXPECT_THROW(reg.add_role("user"), Error);
  EXPECT_THROW(reg.add_role("two words"), Error);
  EXPECT_THROW(reg.add_role(""), Error);
}

TEST(Registry, OverlayExtendsButNeverRemoves) {
  auto reg = TagRegistry::builtin();
  const auto before = reg.size();
  reg.apply_overlay(nlohmann::json{{"other:distractor", "Irrelevant material"}, {"instruction", "ignored"}});
  EXPECT_EQ(reg.size(), before + 1);
  EXPECT_EQ(reg.description("other:distractor"), "Irrelevant material");
  EXPECT_EQ(reg.description("instruction"), TagRegistry::builtin().description("instruction"));
  EXPECT_NE(reg.fingerprint(), TagRegistry::builtin().fingerprint());
  EXPECT_THROW(reg.apply_overlay(nlohmann::json::array()), Error);
}
