#pragma once

// Prompt assembly for every (strategy, task) pair. Templates live as golden
// files under prompts/ with {{clinical_note}} and {{context}} placeholders;
// the same texts are embedded here as builtins so the library works without
// a prompts directory. A unit test pins file == builtin.

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phenorag/errors.hpp"
#include "phenorag/tokenize.hpp"

namespace phenorag {

enum class Strategy { BASE, COT, RAG, RAG_COT, COT_RAG };
enum class Task { GENE, DISEASE };
enum class PromptStage { SINGLE, COT_FIRST_PASS, FINAL_WITH_CONTEXT };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::BASE: return "base";
        case Strategy::COT: return "cot";
        case Strategy::RAG: return "rag";
        case Strategy::RAG_COT: return "rag-cot";
        case Strategy::COT_RAG: return "cot-rag";
    }
    return "base";
}

inline Strategy strategy_from_string(std::string_view s) {
    if (s == "base") return Strategy::BASE;
    if (s == "cot") return Strategy::COT;
    if (s == "rag") return Strategy::RAG;
    if (s == "rag-cot") return Strategy::RAG_COT;
    if (s == "cot-rag") return Strategy::COT_RAG;
    throw Error("unknown strategy: " + std::string(s));
}

inline std::string to_string(Task t) { return t == Task::GENE ? "gene" : "disease"; }

inline Task task_from_string(std::string_view s) {
    if (s == "gene") return Task::GENE;
    if (s == "disease") return Task::DISEASE;
    throw Error("unknown task: " + std::string(s));
}

inline std::string prediction_marker(Task t) {
    return t == Task::GENE ? "POTENTIAL_GENES:" : "POTENTIAL_DISEASES:";
}

// The fixed 23-category organ-system taxonomy, in template order.
inline const std::array<std::string_view, 23>& organ_system_taxonomy() {
    static const std::array<std::string_view, 23> categories = {
        "Genitourinary system", "Cellular phenotype", "Blood and blood-forming tissues", "Head and neck",
        "Limbs", "Metabolism/homeostasis", "Prenatal development or birth", "Breast",
        "Cardiovascular system", "Digestive system", "Ear", "Endocrine system", "Eye", "Immune system",
        "Integument", "Musculoskeletal system", "Nervous system", "Respiratory system", "Thoracic cavity",
        "Voice", "Constitutional symptoms", "Growth abnormality", "Neoplasm"};
    return categories;
}

struct PromptBundle {
    std::string system_message;
    std::string user_message;
    std::size_t token_budget = 2048;
    Strategy strategy = Strategy::BASE;
    Task task = Task::GENE;
    PromptStage stage = PromptStage::SINGLE;

    // Internals for context injection: the user message with an unreplaced
    // {{context}} slot, so chunks can be spliced in before the note later.
    std::string user_with_context_slot;
    std::string note_text;
};

namespace prompt_templates {

// Base prompt, gene prioritization.
inline constexpr std::string_view kBaseGene =
    R"PHR(You are a genetic counselor. Your task is to identify potential genes associated with the given phenotypes. Follow the output format precisely. {{context}}'{{clinical_note}}' Based on this information, provide a numbered list of EXACTLY 10 potential genes. Use EXACTLY this format: POTENTIAL_GENES:
1. 'Gene1'
2. 'Gene2'
3. 'Gene3'
4. 'Gene4'
5. 'Gene5'
6. 'Gene6'
7. 'Gene7'
8. 'Gene8'
9. 'Gene9'
10. 'Gene10'

Ensure all gene names are in single quotes, and there are exactly 10 in the list. Do not deviate from this format or add any explanations.
)PHR";

// Base prompt, disease diagnosis. Mirrors the gene template with disease
// wording and the POTENTIAL_DISEASES marker.
inline constexpr std::string_view kBaseDisease =
    R"PHR(You are a genetic counselor. Your task is to identify potential diseases associated with the given phenotypes. Follow the output format precisely. {{context}}'{{clinical_note}}' Based on this information, provide a numbered list of EXACTLY 10 potential diseases. Use EXACTLY this format: POTENTIAL_DISEASES:
1. 'Disease1'
2. 'Disease2'
3. 'Disease3'
4. 'Disease4'
5. 'Disease5'
6. 'Disease6'
7. 'Disease7'
8. 'Disease8'
9. 'Disease9'
10. 'Disease10'

Ensure all disease names are in single quotes, and there are exactly 10 in the list. Do not deviate from this format or add any explanations.
)PHR";

inline constexpr std::string_view kCotGene =
    R"PHR([SYSTEM]
You are a geneticist specializing in gene-disease associations. Your task is to reason step-by-step based on the given clinical notes and prioritize EXACTLY 10 genes most likely associated with the described phenotypes. Use the reasoning process outlined below.
[USER]
{{context}}'{{clinical_note}}' Based on the provided clinical notes, follow this reasoning process:

1. **Extract and classify HPO terms**
Classify the extracted terms under the following categories: **Genitourinary system**, **Cellular phenotype**, **Blood and blood-forming tissues**, **Head and neck**, **Limbs**, **Metabolism/homeostasis**, **Prenatal development or birth**, **Breast**, **Cardiovascular system**, **Digestive system**, **Ear**, **Endocrine system**, **Eye**, **Immune system**, **Integument**, **Musculoskeletal system**, **Nervous system**, **Respiratory system**, **Thoracic cavity**, **Voice**, **Constitutional symptoms**, **Growth abnormality**, **Neoplasm**.

2. Assess demographic impact: How do the patient's age, gender, and ethnicity impact the likelihood of gene involvement?

3. Map to relevant gene-disease associations: Based on the extracted HPO terms, retrieve relevant genes known to be associated with these phenotypes.

4. Refine based on inheritance patterns and variant evidence: Narrow down genes based on mode of inheritance, functional impact, and known pathogenic variants.

5. Prioritize the top 10 genes: Finalize a ranked list of EXACTLY 10 genes that are most likely associated with the described phenotypes.

Output your reasoning for each step clearly, followed by the final gene list. Use the following format:

REASONING:
Step 1: [Extract and classify HPO terms]
Step 2: [Assess demographic impact]
Step 3: [Map to relevant gene-disease associations]
Step 4: [Refine based on inheritance patterns and variant evidence]
Step 5: [Prioritize the top 10 genes]

POTENTIAL_GENES:
1. 'Gene1'
2. 'Gene2'
3. 'Gene3'
4. 'Gene4'
5. 'Gene5'
6. 'Gene6'
7. 'Gene7'
8. 'Gene8'
9. 'Gene9'
10. 'Gene10'

Ensure all gene names are in single quotes, and there are exactly 10 in the list. Do not deviate from this format or add any explanations.
)PHR";

// CoT, disease diagnosis: steps 3-5 narrow by broad disease groups.
inline constexpr std::string_view kCotDisease =
    R"PHR([SYSTEM]
You are a geneticist specializing in rare disease diagnosis. Your task is to reason step-by-step based on the given clinical notes and prioritize EXACTLY 10 diseases most likely consistent with the described phenotypes. Use the reasoning process outlined below.
[USER]
{{context}}'{{clinical_note}}' Based on the provided clinical notes, follow this reasoning process:

1. **Extract and classify HPO terms**
Classify the extracted terms under the following categories: **Genitourinary system**, **Cellular phenotype**, **Blood and blood-forming tissues**, **Head and neck**, **Limbs**, **Metabolism/homeostasis**, **Prenatal development or birth**, **Breast**, **Cardiovascular system**, **Digestive system**, **Ear**, **Endocrine system**, **Eye**, **Immune system**, **Integument**, **Musculoskeletal system**, **Nervous system**, **Respiratory system**, **Thoracic cavity**, **Voice**, **Constitutional symptoms**, **Growth abnormality**, **Neoplasm**.

2. Assess demographic impact: How do the patient's age, gender, and ethnicity impact the likelihood of disease involvement?

3. Categorize possible conditions into broad disease groups: Establish a preliminary diagnostic scope from the extracted HPO terms.

4. Narrow down candidate diseases: Rule out conditions inconsistent with the inheritance pattern, phenotype severity, or clinical course.

5. Prioritize the top 10 diseases: Finalize a ranked list of EXACTLY 10 diseases that are most likely consistent with the described phenotypes.

Output your reasoning for each step clearly, followed by the final disease list. Use the following format:

REASONING:
Step 1: [Extract and classify HPO terms]
Step 2: [Assess demographic impact]
Step 3: [Categorize possible conditions into broad disease groups]
Step 4: [Narrow down candidate diseases]
Step 5: [Prioritize the top 10 diseases]

POTENTIAL_DISEASES:
1. 'Disease1'
2. 'Disease2'
3. 'Disease3'
4. 'Disease4'
5. 'Disease5'
6. 'Disease6'
7. 'Disease7'
8. 'Disease8'
9. 'Disease9'
10. 'Disease10'

Ensure all disease names are in single quotes, and there are exactly 10 in the list. Do not deviate from this format or add any explanations.
)PHR";

// Finalize pass for the CoT-first hybrid: prior reasoning verbatim plus the
// retrieved context, closing with the strict list format.
inline constexpr std::string_view kFinalizeGene =
    R"PHR([SYSTEM]
You are a geneticist specializing in gene-disease associations. Your task is to reason step-by-step based on the given clinical notes and prioritize EXACTLY 10 genes most likely associated with the described phenotypes. Use the reasoning process outlined below.
[USER]
{{context}}'{{clinical_note}}' Your previous step-by-step reasoning over these clinical notes is reproduced below.

PRIOR REASONING:
{{reasoning}}

Using the reference context above together with your prior reasoning, finalize a ranked list of EXACTLY 10 genes that are most likely associated with the described phenotypes. Use EXACTLY this format: POTENTIAL_GENES:
1. 'Gene1'
2. 'Gene2'
3. 'Gene3'
4. 'Gene4'
5. 'Gene5'
6. 'Gene6'
7. 'Gene7'
8. 'Gene8'
9. 'Gene9'
10. 'Gene10'

Ensure all gene names are in single quotes, and there are exactly 10 in the list. Do not deviate from this format or add any explanations.
)PHR";

inline constexpr std::string_view kFinalizeDisease =
    R"PHR([SYSTEM]
You are a geneticist specializing in rare disease diagnosis. Your task is to reason step-by-step based on the given clinical notes and prioritize EXACTLY 10 diseases most likely consistent with the described phenotypes. Use the reasoning process outlined below.
[USER]
{{context}}'{{clinical_note}}' Your previous step-by-step reasoning over these clinical notes is reproduced below.

PRIOR REASONING:
{{reasoning}}

Using the reference context above together with your prior reasoning, finalize a ranked list of EXACTLY 10 diseases that are most likely consistent with the described phenotypes. Use EXACTLY this format: POTENTIAL_DISEASES:
1. 'Disease1'
2. 'Disease2'
3. 'Disease3'
4. 'Disease4'
5. 'Disease5'
6. 'Disease6'
7. 'Disease7'
8. 'Disease8'
9. 'Disease9'
10. 'Disease10'

Ensure all disease names are in single quotes, and there are exactly 10 in the list. Do not deviate from this format or add any explanations.
)PHR";

// Synthetic-note assembly: renders a free-text-note generation request from
// a structured case record.
inline constexpr std::string_view kNoteSynthesis =
    R"PHR(You are a clinical documentation specialist. Write an extensive, realistic free-text clinical note for the patient described by the structured record below. Describe the phenotypic findings in narrative prose, weaving in the demographic details naturally. Do not mention any disease name or gene name, and do not use bullet points or numbered lists.

Age: {{age}}
Sex: {{sex}}
Phenotypic features: {{hpo_terms}}

Write the clinical note now.
)PHR";

}  // namespace prompt_templates

struct TemplateSet {
    std::string base_gene{prompt_templates::kBaseGene};
    std::string base_disease{prompt_templates::kBaseDisease};
    std::string cot_gene{prompt_templates::kCotGene};
    std::string cot_disease{prompt_templates::kCotDisease};
    std::string finalize_gene{prompt_templates::kFinalizeGene};
    std::string finalize_disease{prompt_templates::kFinalizeDisease};
    std::string note_synthesis{prompt_templates::kNoteSynthesis};

    static TemplateSet builtin() { return {}; }

    static TemplateSet load_dir(const std::filesystem::path& dir) {
        auto read = [&](const char* name) {
            std::ifstream in(dir / name, std::ios::binary);
            if (!in) throw Error("missing prompt template: " + (dir / name).string());
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        TemplateSet t;
        t.base_gene = read("base_gene.txt");
        t.base_disease = read("base_disease.txt");
        t.cot_gene = read("cot_gene.txt");
        t.cot_disease = read("cot_disease.txt");
        t.finalize_gene = read("cot_finalize_gene.txt");
        t.finalize_disease = read("cot_finalize_disease.txt");
        t.note_synthesis = read("note_synthesis.txt");
        return t;
    }
};

namespace detail {

inline std::string replace_all_copy(std::string text, std::string_view needle, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

struct SplitTemplate {
    std::string system;
    std::string user;
};

inline SplitTemplate split_template(const std::string& tmpl) {
    constexpr std::string_view sys_tag = "[SYSTEM]\n";
    constexpr std::string_view user_tag = "\n[USER]\n";
    if (tmpl.rfind("[SYSTEM]\n", 0) != 0) return {"", tmpl};
    std::size_t user_pos = tmpl.find(user_tag);
    if (user_pos == std::string::npos) throw Error("template has [SYSTEM] but no [USER] section");
    return {tmpl.substr(sys_tag.size(), user_pos - sys_tag.size()), tmpl.substr(user_pos + user_tag.size())};
}

}  // namespace detail

// Rendered reference-context block; ends with a blank line so it reads as a
// block preceding the quoted note.
inline std::string render_context_block(const std::vector<std::pair<std::string, std::string>>& chunks) {
    if (chunks.empty()) return "";
    std::string out = "REFERENCE CONTEXT:\n";
    for (const auto& [text, provenance] : chunks) {
        out += "[" + provenance + "] " + text + "\n";
    }
    out += "END CONTEXT\n\n";
    return out;
}

namespace detail {

inline PromptBundle assemble(const std::string& tmpl, const std::string& note, Strategy strategy, Task task,
                             PromptStage stage, std::size_t token_budget, const Tokenizer& tok) {
    if (note.empty()) throw EmptyInput("clinical note is empty");
    SplitTemplate parts = split_template(tmpl);
    PromptBundle bundle;
    bundle.system_message = parts.system;
    bundle.note_text = note;
    bundle.token_budget = token_budget;
    bundle.strategy = strategy;
    bundle.task = task;
    bundle.stage = stage;
    bundle.user_with_context_slot = replace_all_copy(parts.user, "{{clinical_note}}", note);
    bundle.user_message = replace_all_copy(bundle.user_with_context_slot, "{{context}}", "");
    std::size_t tokens = tok.count(bundle.system_message) + tok.count(bundle.user_message);
    if (tokens > token_budget) {
        throw BudgetExceeded("prompt (" + std::to_string(tokens) + " tokens) exceeds budget " +
                             std::to_string(token_budget));
    }
    return bundle;
}

}  // namespace detail

inline PromptBundle assemble_base_prompt(const std::string& note, Task task, const TemplateSet& templates = {},
                                         std::size_t token_budget = 2048,
                                         const Tokenizer& tok = default_tokenizer()) {
    const std::string& tmpl = task == Task::GENE ? templates.base_gene : templates.base_disease;
    return detail::assemble(tmpl, note, Strategy::BASE, task, PromptStage::SINGLE, token_budget, tok);
}

inline PromptBundle assemble_cot_prompt(const std::string& note, Task task, const TemplateSet& templates = {},
                                        std::size_t token_budget = 2048,
                                        const Tokenizer& tok = default_tokenizer()) {
    const std::string& tmpl = task == Task::GENE ? templates.cot_gene : templates.cot_disease;
    return detail::assemble(tmpl, note, Strategy::COT, task, PromptStage::SINGLE, token_budget, tok);
}

inline PromptBundle assemble_finalize_prompt(const std::string& note, Task task, const std::string& reasoning,
                                             const TemplateSet& templates = {}, std::size_t token_budget = 2048,
                                             const Tokenizer& tok = default_tokenizer()) {
    std::string tmpl = task == Task::GENE ? templates.finalize_gene : templates.finalize_disease;
    tmpl = detail::replace_all_copy(std::move(tmpl), "{{reasoning}}", reasoning);
    return detail::assemble(tmpl, note, Strategy::COT_RAG, task, PromptStage::FINAL_WITH_CONTEXT, token_budget,
                            tok);
}

inline std::string assemble_note_synthesis_prompt(const std::string& age, const std::string& sex,
                                                  const std::string& hpo_terms,
                                                  const TemplateSet& templates = {}) {
    std::string out = detail::replace_all_copy(templates.note_synthesis, "{{age}}", age);
    out = detail::replace_all_copy(std::move(out), "{{sex}}", sex);
    return detail::replace_all_copy(std::move(out), "{{hpo_terms}}", hpo_terms);
}

// Splices retrieved chunks in front of the clinical note. Chunks are given
// in final retrieval rank order; when over budget, the lowest-ranked chunks
// are dropped whole until the bundle fits. The note is never truncated.
inline PromptBundle inject_context(PromptBundle bundle,
                                   std::vector<std::pair<std::string, std::string>> context_chunks,
                                   std::size_t window, const Tokenizer& tok = default_tokenizer()) {
    bundle.token_budget = window;
    while (true) {
        std::string block = render_context_block(context_chunks);
        std::string user = detail::replace_all_copy(bundle.user_with_context_slot, "{{context}}", block);
        std::size_t tokens = tok.count(bundle.system_message) + tok.count(user);
        if (tokens <= window) {
            bundle.user_message = std::move(user);
            return bundle;
        }
        if (context_chunks.empty()) {
            throw BudgetExceeded("prompt without context (" + std::to_string(tokens) +
                                 " tokens) exceeds window " + std::to_string(window));
        }
        context_chunks.pop_back();
    }
}

}  // namespace phenorag
