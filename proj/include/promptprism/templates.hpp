#pragma once

// Meta-prompt templates for annotation, task-type classification and
// taxonomy-guided refinement, kept verbatim (including their typos) as
// versioned resources. `{slot}` markers are filled by fill_template().

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "promptprism/digest.hpp"

namespace promptprism::templates {

inline constexpr std::string_view kTemplateVersion = "1";

inline constexpr std::string_view kRefinementTemplate = R"PP(Your task is to augment the prompt based on the given prompt. 
Use these tags to augment the prompts:

1. <instruction> </instruction>: Prompt related to instructions to the LLM on what to do, guide 
how to think about or approach the problem. 
    1-1: <instruction:task> </instruction:task>: Task related instruction. 
        E.g., "This is a classification task."
    1-2: <instruction:guideline> </instruction:guideline>: Non-task specific instructions that 
            shape response behavior.  
        1-2-1: <instruction:guideline:role> </instruction:guideline:role>: Role assumption. 
            For example, "act as an experienced data scientist". 
        1-2-2: <instruction:guideline:scenario> </instruction:guideline:scenario>: 
            Senario description 
        1-2-3: <instruction:guideline:behavioral> </instruction:guideline:behavioral>: 
            Behavioral instructions and interaction style 
        1-2-4: <instruction:guideline:emotion> </instruction:guideline:emotion>:
            guideline for emotional tone
        1-2-5: <instruction:guideline:cot> </instruction:guideline:cot>: 
            Chain of Thought guideline. E.g., "Let's think step by step."
        1-2-6: <instruction:guideline:safety> </instruction:guideline:safety>:
            guideline related to safety. E.g., "avoid harmful content".
2. <contextual_ref> </contextual_ref>: Reference data of background information of the user query, 
    chat history, or retrieved sections in RAG. 
    2-1: <contextual_ref:fewshot> </contextual_ref:fewshot>: sample input-output pairs 
        for in-context learning.
    2-2: <contextual_ref:knowledge_base> </contextual_ref:knowledge_base>:
        reference information or facts. E.g., "Based on medical guidelines..."
    2-3: <contextual_ref:context_for_task> </contextual_ref:context_for_task>:
        relevant background information. 
3. <request_query> </request_query>: User request of query (e.g. Question) 
4. <output_const> </output_const>: Output constraints, response requirements to the LLM on 
    how to generate response 
    4-1: <output_const:label> </output_const:label>: defined set of possible output categories. 
        E.g., "choose from ['positive', 'negative']"
    4-2: <output_const:wordlimit> </output_const:wordlimit>: restrictions on response length. 
        E.g., "respond in 50 words or less".
    4-3: <output_const:format> </output_const:format>: output format or structure specification. 
        E.g., "format as JSON", "present in bullet points".
    4-4: <output_const:style_tone> </output_const:style_tone>: writing style or tone.
        E.g., "use academic language".
5. <other> </other>: Other purpose components
    5-1: <other:adversarial> </other:adversarial>: Adversarial components. E.g., "\&\&\&!!!!!!"
6. <response> </response>: Response component from LLM 
    6-1: <response:answer> </response:answer>: specific answer component.
7. <tools> </tools>: specifications for tool usage
    7-1: <tools:tool_name> </tools:tool_name>:identifier for specific tools
    7-2: <tools:tool_description> </tools:tool_description>: explanations of tool functionality. 
    7-3: <tools:parameters> </tools:parameters>: required inputs and configurations.

Be creative, and augment contents related to the tags. 
For example, <output\_const> Give only the answer </output\_const>.
Give **ONLY** the augmented version of the prompt. Do **NOT** include any preambles.
                              
Below is the prompt:

### Prompt ### 
<instruction> {definition} </instruction>}

### Examples ###

### Negative Examples ### 
<contextual_ref> {negative_examples} </contextual_ref>

### Positive Examples ###
<contextual_ref> {positive_examples} </contextual_ref>)PP";

inline constexpr std::string_view kAnnotationTemplate = R"PP(You task is to annotate a prompt based on some prompt taxonomy defined below. 

Given a prompt, please decompose the prompt into several components by adding the below tags in 
prompt taxonomy section to the original input prompt. 
The available prompt component tags are defined below. Not all prompt component tags should be 
used for each prompt. 

### prompt taxonomy ###
{prompt_taxonomy}

### additional tips ###
1. You have to analyze system prompts and user prompts separately using the above prompt taxonomy.

2. If you can find the related tags in a subcategory component, use the tag in the subcategory. 
If not, use the parent node tag. For example, if a prompt segment belongs to few-shot examples, 
then use "<contextual_ref:fewshot> </contextual_ref:fewshot>", then insert this tag. 
If it belongs to other contextual information that are not directly available in the options, 
then use "<contextual_ref> </contextual_ref>" instead.

3. Please only added tags to the original input prompt. Please do **NOT** include any preambles 
or additional explanations. 

4. If there already exists some tags in the original input prompt such as <tools></tools>, 
think about if the tags align with our current taxonomy defined above. If the tag name is the 
same, keep the original tags without adding additional tags. If the tag name is different, 
insert an additional tag outside of the original tag. 

5. It is possible to have the same tag to be used more than once in a single input prompt. 
However, for consecutive prompt components sharing the same tags, merge them and use only one tag 
instead of multiple same tags. 

### few-shot examples ###
Input prompt: {example_input_prompt}
Output: {example_output}

### Prompt ###
This is the input prompt you want to annotate: {input_prompt_to_be_annotated})PP";

inline constexpr std::string_view kTaskTypeTemplate = R"PP(You are an LLM prompt task type classifier. Your task is to classify a prompt to certain task type. 
Please classify the prompt into one of the below task types:
### Prompt Task Type Options ###
* Classification:Sentiment Analysis
* Classification:Topic Classification
* Classification:Toxicity Detection
* Classification:Multi-label Classification
* Classification:Others
* Open Book QA:Reading Comprehension
* Open Book QA:Document-based QA
* Open Book QA:Multi-document QA
* Open Book QA:Context-specific Questions
* Open Book QA:Others
* Closed Book QA:Factual QA
* Closed Book QA:Common Knowledge Questions
* Closed Book QA:Others
* Coding:Algorithm Implementation
* Coding:Debugging
* Coding:Code Generation
* Coding:Code Explanation
* Coding:Function Implementation
* Coding:Others
* Reasoning:Logical Reasoning
* Reasoning:Mathematical Problem Solving
* Reasoning:Causal Reasoning
* Reasoning:Others
* Summarization:Text Summarization
* Summarization:Multi-document Summarization
* Summarization:Others
* Function calling:Data Retrieval (e.g., get_user_info, fetch_record_by_id)
* Function calling:System Operations (e.g., check_status, validate_token)
* Function calling:API Integration (e.g., external_api_call, service_request)
* Function calling:Data Transformation (e.g., format_data, convert_units)
* Function calling:Multi-function Chain (e.g.,complex operations of multiple function calls)
* Function calling:Others
* Others
### Additional Tips ###
1. If a prompt belongs to logical reasoning of the reasoning task type, then your output should be 
  "Reasoning:Logical Reasoning". 
2. Please use the uppercase letter and Lowercase letter exactly as above. Please do not include 
   any information in the parenthesis in the task type name. 
3. If you cannot classify a prompt into a task type, please feel free to use "Others". For 
   example, if a task belongs to summarization, but not text summarization or multi-doc 
   summarization, then the output should be "Summarization:Others". 
4. Please only output task type of the prompt. Please do **NOT** include any preambles or 
   additional explanations. 
5. Please do not output more than one task type for a given prompt. Each prompt should only be 
   linked to one task type. 
6. Typically, if a prompt contains one or more tools, you may probably classify it into one of 
   the function calling task types.
7. Please do **NOT** extract actual content from the prompt as task type. Please only use the 
   above options as the task type. 

### Few-shot Examples ###
Input Prompt: "{example task instruction}"
Output: "{task type}"
### Prompt ###
This is the input prompt you want to annotate: {input_prompt_to_be_annotated})PP";

/// Task-type labels, parenthetical examples removed.
inline constexpr std::array<std::string_view, 33> kTaskTypes = {
    "Classification:Sentiment Analysis",
    "Classification:Topic Classification",
    "Classification:Toxicity Detection",
    "Classification:Multi-label Classification",
    "Classification:Others",
    "Open Book QA:Reading Comprehension",
    "Open Book QA:Document-based QA",
    "Open Book QA:Multi-document QA",
    "Open Book QA:Context-specific Questions",
    "Open Book QA:Others",
    "Closed Book QA:Factual QA",
    "Closed Book QA:Common Knowledge Questions",
    "Closed Book QA:Others",
    "Coding:Algorithm Implementation",
    "Coding:Debugging",
    "Coding:Code Generation",
    "Coding:Code Explanation",
    "Coding:Function Implementation",
    "Coding:Others",
    "Reasoning:Logical Reasoning",
    "Reasoning:Mathematical Problem Solving",
    "Reasoning:Causal Reasoning",
    "Reasoning:Others",
    "Summarization:Text Summarization",
    "Summarization:Multi-document Summarization",
    "Summarization:Others",
    "Function calling:Data Retrieval",
    "Function calling:System Operations",
    "Function calling:API Integration",
    "Function calling:Data Transformation",
    "Function calling:Multi-function Chain",
    "Function calling:Others",
    "Others",
};

inline constexpr std::string_view kOthers = "Others";

/// Instruction suffix of the chain-of-thought baseline.
inline constexpr std::string_view kCotSuffix = "Please think step by step and then solve the task.";

/// Hand-written few-shot pair for the annotation template's example slot.
/// Not taken from any published prompt set.
inline constexpr std::string_view kAnnotationExampleInput =
    "You are a helpful travel assistant. Answer in at most three sentences.\n\nWhat is the best time to visit Kyoto?";
inline constexpr std::string_view kAnnotationExampleOutput =
    "<instruction:guideline:role>You are a helpful travel assistant.</instruction:guideline:role> "
    "<output_const:wordlimit>Answer in at most three sentences.</output_const:wordlimit>\n\n"
    "<request_query>What is the best time to visit Kyoto?</request_query>";

/// Hand-written example for the task-type template's few-shot slot.
inline constexpr std::string_view kTaskTypeExampleInput =
    "Given the list of available functions, fetch the order record whose id is 1142.";
inline constexpr std::string_view kTaskTypeExampleOutput = "Function calling:Data Retrieval";

inline bool is_task_type(std::string_view label) {
  for (auto v : kTaskTypes) {
    if (v == label) return true;
  }
  return false;
}

/// Single-pass substitution of `{name}` slots; inserted text is not rescanned.
/// Unknown `{...}` sequences are copied unchanged.
inline std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& slots) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = slots.find(tmpl.substr(i + 1, close - i - 1));
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

inline std::map<std::string, std::string> checksums() {
  return {
      {"annotation", sha256_hex(kAnnotationTemplate)},
      {"refinement", sha256_hex(kRefinementTemplate)},
      {"task_type", sha256_hex(kTaskTypeTemplate)},
  };
}

}  // namespace promptprism::templates
