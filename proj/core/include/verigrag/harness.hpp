#pragma once

// Generation and pass@k evaluation: retrieve a graph for a description, turn it
// into a soft prompt, sample code from the frozen LM and run external checkers.

#include "verigrag/language_model.hpp"
#include "verigrag/retriever.hpp"
#include "verigrag/veriformer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace verigrag::harness {

/// 1 - C(n-c, k) / C(n, k) as a running product. Throws DomainError unless
/// 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

inline constexpr const char* kCheckerPathEnv = "VERIGRAG_CHECKER_PATH";
inline constexpr const char* kCodeFilePlaceholder = "{code_file}";

struct BenchmarkTask {
    std::string task_id;
    std::string description;
    std::string syntax_command;    // template with {code_file}
    std::string function_command;  // template with {code_file}
    double timeout_s = 10.0;
    std::filesystem::path dir;  // checkers run here
};

/// Reads one task directory: description.txt, check_syntax.cmd, check_function.cmd, meta.json.
BenchmarkTask load_task(const std::filesystem::path& dir);
/// Every task subdirectory, sorted by name. Throws NoTasksError when there is none.
std::vector<BenchmarkTask> load_benchmark(const std::filesystem::path& dir);

struct CheckOutcome {
    bool passed = false;
    bool timed_out = false;
    int exit_code = -1;
};

/// Runs `sh -c` on the template with {code_file} replaced by the quoted path, in
/// `workdir`, with VERIGRAG_CHECKER_PATH prepended to PATH. The whole process
/// group is killed at the timeout. Exit status 126 or 127 throws CheckerUnavailable.
CheckOutcome run_checker(const std::string& command_template, const std::filesystem::path& code_file,
                         double timeout_s, const std::filesystem::path& workdir);

struct SampleRecord {
    std::string task_id;
    int sample_index = 0;
    double temperature = 0.0;
    std::string code;
    bool syntax_pass = false;
    bool function_pass = false;  // only ever true when syntax_pass is
    bool timed_out = false;
    bool no_prompt = false;
    std::string retrieved_id;

    nlohmann::ordered_json to_json() const;
};

/// Syntax check, then the functional check only if the syntax check passed.
void check_sample(SampleRecord& record, const BenchmarkTask& task);

struct Pipeline {
    retrieval::DualEncoder student;
    retrieval::RetrievalIndex index;
    std::map<std::string, RowVector> graph_embeddings;  // by index id
    vf::SoftPromptModel prompt_model;
    lm::TinyLm lm;

    /// Throws PipelineConfigError when the components' dimensions disagree.
    void validate() const;
};

struct GenerationConfig {
    int n = 20;
    std::vector<double> temperatures{0.2, 0.5, 0.8};
    std::uint64_t seed = 0;
    int max_new_tokens = 96;
    int top_k = 1;  // above 1 the prompts are concatenated; experimental

    nlohmann::ordered_json to_json() const;
};

struct GenerationResult {
    std::vector<SampleRecord> records;
    std::vector<std::string> warnings;
};

/// Sample i uses temperatures[i % size]. Deterministic given (task_id, seed).
/// An empty index falls back to generation without a soft prompt.
GenerationResult generate_samples(const std::string& task_id, const std::string& description,
                                  const Pipeline& pipeline, const GenerationConfig& cfg);

struct EvalConfig {
    GenerationConfig generation;
    std::vector<int> k_list{1, 5};
};

/// Report JSON with per-task counts, per-temperature breakdowns and mean pass@k.
nlohmann::ordered_json evaluate(const std::filesystem::path& benchmark_dir, const Pipeline& pipeline,
                                const EvalConfig& cfg);
/// Builds the report from checked records; `tasks` fixes the order.
nlohmann::ordered_json build_report(const std::vector<std::string>& task_ids,
                                    const std::vector<std::vector<SampleRecord>>& records, const EvalConfig& cfg,
                                    const std::vector<std::string>& warnings);

/// Throws SchemaError describing the first violation.
void validate_report(const nlohmann::json& report);

}  // namespace verigrag::harness
