#include "verigrag/harness.hpp"

#include "verigrag/checkpoint.hpp"
#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace verigrag::harness {

double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
        throw DomainError("pass@k needs 0 <= c <= n and 1 <= k <= n (n=" + std::to_string(n) +
                          ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
    }
    if (n - c < k) return 1.0;
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
    double ratio = 1.0;
    for (int i = n - c + 1; i <= n; ++i) ratio *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    return 1.0 - ratio;
}

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'') {
            out += "'\\''";
        } else {
            out += ch;
        }
    }
    return out + "'";
}

std::string temperature_key(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", t);
    return buf;
}

}  // namespace

BenchmarkTask load_task(const std::filesystem::path& dir) {
    BenchmarkTask t;
    t.task_id = dir.filename().string();
    t.dir = std::filesystem::absolute(dir);
    t.description = trim(read_text_file(dir / "description.txt"));
    t.syntax_command = trim(read_text_file(dir / "check_syntax.cmd"));
    t.function_command = trim(read_text_file(dir / "check_function.cmd"));
    if (t.description.empty()) throw SchemaError("task " + t.task_id + " has an empty description");
    if (t.syntax_command.empty() || t.function_command.empty()) {
        throw SchemaError("task " + t.task_id + " has an empty checker command");
    }
    if (std::filesystem::exists(dir / "meta.json")) {
        try {
            const auto meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
            t.timeout_s = meta.value("timeout_s", 10.0);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("task " + t.task_id + " meta.json: " + e.what());
        }
    }
    if (!(t.timeout_s > 0)) throw SchemaError("task " + t.task_id + " timeout_s must be positive");
    return t;
}

std::vector<BenchmarkTask> load_benchmark(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw NoTasksError("benchmark directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "description.txt")) dirs.push_back(entry.path());
    }
    if (dirs.empty()) throw NoTasksError("benchmark directory " + dir.string() + " contains no tasks");
    std::sort(dirs.begin(), dirs.end());
    std::vector<BenchmarkTask> tasks;
    for (const auto& d : dirs) tasks.push_back(load_task(d));
    return tasks;
}

CheckOutcome run_checker(const std::string& command_template, const std::filesystem::path& code_file,
                         double timeout_s, const std::filesystem::path& workdir) {
    std::string cmd = command_template;
    const std::string quoted = shell_quote(std::filesystem::absolute(code_file).string());
    const std::string placeholder = kCodeFilePlaceholder;
    for (auto pos = cmd.find(placeholder); pos != std::string::npos; pos = cmd.find(placeholder, pos + quoted.size())) {
        cmd.replace(pos, placeholder.size(), quoted);
    }
    std::string path_env;
    if (const char* extra = std::getenv(kCheckerPathEnv); extra && *extra) path_env = extra;
    if (const char* base = std::getenv("PATH"); base && *base) {
        path_env += path_env.empty() ? base : std::string(":") + base;
    }
    const std::string wd = workdir.string();

    const pid_t pid = ::fork();
    if (pid < 0) throw CheckerUnavailable("fork failed");
    if (pid == 0) {
        ::setpgid(0, 0);
        if (!wd.empty() && ::chdir(wd.c_str()) != 0) ::_exit(127);
        ::setenv("PATH", path_env.c_str(), 1);
        ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    int status = 0;
    while (true) {
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0 && errno != EINTR) throw CheckerUnavailable("waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            return {false, true, -1};
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    CheckOutcome out;
    out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    if (out.exit_code == 126 || out.exit_code == 127) {
        throw CheckerUnavailable("checker could not be executed (exit " + std::to_string(out.exit_code) + "): " + cmd);
    }
    out.passed = out.exit_code == 0;
    return out;
}

nlohmann::ordered_json SampleRecord::to_json() const {
    return {{"task_id", task_id},
            {"sample_index", sample_index},
            {"temperature", temperature},
            {"code", code},
            {"syntax_pass", syntax_pass},
            {"function_pass", function_pass},
            {"timed_out", timed_out},
            {"no_prompt", no_prompt},
            {"retrieved_id", retrieved_id}};
}

void check_sample(SampleRecord& record, const BenchmarkTask& task) {
    char tmpl[] = "/tmp/verigrag-sample-XXXXXX";
    const int fd = ::mkstemp(tmpl);
    if (fd < 0) throw IoError("cannot create a temporary candidate file");
    ::close(fd);
    const std::filesystem::path file = std::string(tmpl) + ".v";
    std::filesystem::rename(tmpl, file);
    struct Cleanup {
        std::filesystem::path p;
        ~Cleanup() {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    } cleanup{file};
    write_text_file(file, record.code);

    record.syntax_pass = record.function_pass = record.timed_out = false;
    const auto syntax = run_checker(task.syntax_command, file, task.timeout_s, task.dir);
    record.timed_out = syntax.timed_out;
    record.syntax_pass = syntax.passed;
    if (!record.syntax_pass) return;
    const auto function = run_checker(task.function_command, file, task.timeout_s, task.dir);
    record.timed_out = function.timed_out;
    record.function_pass = function.passed;
}

void Pipeline::validate() const {
    const auto& rc = student.config();
    if (index.size() > 0 && index.dim != rc.d_r) {
        throw PipelineConfigError("index dim " + std::to_string(index.dim) + " != student d_r " + std::to_string(rc.d_r));
    }
    if (prompt_model.d_g() != rc.d_g) {
        throw PipelineConfigError("VeriFormer d_g " + std::to_string(prompt_model.d_g()) + " != retriever d_g " +
                                  std::to_string(rc.d_g));
    }
    if (prompt_model.d_llm() != lm.config().d_llm) {
        throw PipelineConfigError("soft prompt width " + std::to_string(prompt_model.d_llm()) + " != LM d_llm " +
                                  std::to_string(lm.config().d_llm));
    }
    for (const auto& id : index.ids) {
        const auto it = graph_embeddings.find(id);
        if (it == graph_embeddings.end()) throw PipelineConfigError("no graph embedding for index id '" + id + "'");
        if (it->second.size() != rc.d_g) throw PipelineConfigError("graph embedding '" + id + "' is not d_g wide");
    }
}

nlohmann::ordered_json GenerationConfig::to_json() const {
    return {{"n", n}, {"temperatures", temperatures}, {"seed", seed}, {"max_new_tokens", max_new_tokens}, {"top_k", top_k}};
}

GenerationResult generate_samples(const std::string& task_id, const std::string& description,
                                  const Pipeline& pipeline, const GenerationConfig& cfg) {
    if (cfg.n < 1) throw ConfigError("n must be at least 1");
    if (cfg.temperatures.empty()) throw ConfigError("at least one temperature is required");
    if (cfg.top_k < 1) throw ConfigError("top_k must be at least 1");
    pipeline.validate();
    GenerationResult result;

    std::optional<Matrix> prefix;
    std::string retrieved;
    const auto hits = retrieval::retrieve(pipeline.index, description, pipeline.student, cfg.top_k);
    if (hits.empty()) {
        result.warnings.push_back("RetrievalEmpty: index is empty; task " + task_id + " generated without a soft prompt");
    } else {
        std::vector<Matrix> prompts;
        for (const auto& h : hits) prompts.push_back(pipeline.prompt_model.soft_prompt(pipeline.graph_embeddings.at(h.id)));
        Eigen::Index rows = 0;
        for (const auto& p : prompts) rows += p.rows();
        Matrix joined(rows, prompts.front().cols());
        Eigen::Index at = 0;
        for (const auto& p : prompts) {
            joined.middleRows(at, p.rows()) = p;
            at += p.rows();
        }
        prefix = std::move(joined);
        retrieved = hits.front().id;
    }

    const auto desc_ids = pipeline.lm.encode_description(description);
    auto rng = nn::seeded_rng(cfg.seed, fnv1a64(task_id));
    for (int i = 0; i < cfg.n; ++i) {
        SampleRecord r;
        r.task_id = task_id;
        r.sample_index = i;
        r.temperature = cfg.temperatures[static_cast<std::size_t>(i) % cfg.temperatures.size()];
        r.no_prompt = !prefix.has_value();
        r.retrieved_id = retrieved;
        const auto ids = pipeline.lm.sample(prefix ? &*prefix : nullptr, desc_ids, r.temperature, rng, cfg.max_new_tokens);
        r.code = pipeline.lm.decode_code(ids);
        result.records.push_back(std::move(r));
    }
    return result;
}

nlohmann::ordered_json build_report(const std::vector<std::string>& task_ids,
                                    const std::vector<std::vector<SampleRecord>>& records, const EvalConfig& cfg,
                                    const std::vector<std::string>& warnings) {
    if (task_ids.size() != records.size()) throw ShapeError("one record list per task");
    nlohmann::ordered_json report;
    report["schema_version"] = 1;
    auto config = cfg.generation.to_json();
    config["k"] = cfg.k_list;
    report["config"] = config;
    report["tasks"] = nlohmann::ordered_json::array();
    std::map<int, double> syntax_sum, function_sum;
    for (std::size_t t = 0; t < task_ids.size(); ++t) {
        const auto& recs = records[t];
        const int n = static_cast<int>(recs.size());
        int cs = 0, cf = 0;
        nlohmann::ordered_json per_temp = nlohmann::ordered_json::object();
        nlohmann::ordered_json samples = nlohmann::ordered_json::array();
        bool no_prompt = false;
        for (const auto& r : recs) {
            cs += r.syntax_pass ? 1 : 0;
            cf += r.function_pass ? 1 : 0;
            no_prompt = no_prompt || r.no_prompt;
            auto& slot = per_temp[temperature_key(r.temperature)];
            if (slot.is_null()) slot = {{"n", 0}, {"c_syntax", 0}, {"c_function", 0}};
            slot["n"] = slot["n"].get<int>() + 1;
            slot["c_syntax"] = slot["c_syntax"].get<int>() + (r.syntax_pass ? 1 : 0);
            slot["c_function"] = slot["c_function"].get<int>() + (r.function_pass ? 1 : 0);
            samples.push_back({{"sample_index", r.sample_index},
                               {"temperature", r.temperature},
                               {"syntax_pass", r.syntax_pass},
                               {"function_pass", r.function_pass},
                               {"timed_out", r.timed_out},
                               {"code", r.code}});
        }
        nlohmann::ordered_json task{{"task_id", task_ids[t]}, {"n", n},           {"c_syntax", cs},
                                    {"c_function", cf},       {"no_prompt", no_prompt}, {"per_temperature", per_temp},
                                    {"samples", samples}};
        report["tasks"].push_back(task);
        for (int k : cfg.k_list) {
            syntax_sum[k] += pass_at_k(n, cs, k);
            function_sum[k] += pass_at_k(n, cf, k);
        }
    }
    nlohmann::ordered_json metrics{{"syntax", nlohmann::ordered_json::object()},
                                   {"function", nlohmann::ordered_json::object()}};
    const double nt = static_cast<double>(task_ids.size());
    for (int k : cfg.k_list) {
        const std::string key = "pass@" + std::to_string(k);
        metrics["syntax"][key] = nt > 0 ? syntax_sum[k] / nt : 0.0;
        metrics["function"][key] = nt > 0 ? function_sum[k] / nt : 0.0;
    }
    report["metrics"] = metrics;
    report["warnings"] = warnings;
    return report;
}

nlohmann::ordered_json evaluate(const std::filesystem::path& benchmark_dir, const Pipeline& pipeline,
                                const EvalConfig& cfg) {
    const auto tasks = load_benchmark(benchmark_dir);
    if (cfg.k_list.empty()) throw ConfigError("at least one k is required");
    for (int k : cfg.k_list) {
        if (k < 1 || k > cfg.generation.n) throw ConfigError("every k must lie in [1, n]");
    }
    std::vector<std::string> ids;
    std::vector<std::vector<SampleRecord>> records;
    std::vector<std::string> warnings;
    for (const auto& task : tasks) {
        auto gen = generate_samples(task.task_id, task.description, pipeline, cfg.generation);
        for (auto& r : gen.records) check_sample(r, task);
        warnings.insert(warnings.end(), gen.warnings.begin(), gen.warnings.end());
        ids.push_back(task.task_id);
        records.push_back(std::move(gen.records));
    }
    return build_report(ids, records, cfg, warnings);
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw SchemaError("report: " + what); }

int require_count(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj.at(key).is_number_integer()) bad(where + " lacks integer '" + key + "'");
    return obj.at(key).get<int>();
}

}  // namespace

void validate_report(const nlohmann::json& report) {
    if (!report.is_object()) bad("not an object");
    if (report.value("schema_version", 0) != 1) bad("schema_version must be 1");
    if (!report.contains("config") || !report.at("config").is_object()) bad("missing config object");
    if (!report.contains("tasks") || !report.at("tasks").is_array()) bad("missing tasks array");
    for (const auto& task : report.at("tasks")) {
        if (!task.contains("task_id") || !task.at("task_id").is_string()) bad("task without a string task_id");
        const std::string where = "task " + task.at("task_id").get<std::string>();
        const int n = require_count(task, "n", where);
        const int cs = require_count(task, "c_syntax", where);
        const int cf = require_count(task, "c_function", where);
        if (n < 1 || cs < 0 || cs > n || cf < 0 || cf > n) bad(where + " has counts outside [0, n]");
        if (cf > cs) bad(where + " has more functional than syntactic passes");
        if (!task.contains("per_temperature") || !task.at("per_temperature").is_object()) {
            bad(where + " lacks per_temperature");
        }
        int total = 0;
        for (const auto& [key, slot] : task.at("per_temperature").items()) {
            const int tn = require_count(slot, "n", where + " temperature " + key);
            const int ts = require_count(slot, "c_syntax", where + " temperature " + key);
            const int tf = require_count(slot, "c_function", where + " temperature " + key);
            if (ts > tn || tf > ts || ts < 0 || tf < 0) bad(where + " temperature " + key + " has bad counts");
            total += tn;
        }
        if (total != n) bad(where + " per_temperature counts do not sum to n");
        if (task.contains("samples")) {
            for (const auto& s : task.at("samples")) {
                if (s.value("function_pass", false) && !s.value("syntax_pass", false)) {
                    bad(where + " has a sample that passes function but not syntax");
                }
            }
        }
    }
    if (!report.contains("metrics") || !report.at("metrics").is_object()) bad("missing metrics");
    for (const char* metric : {"syntax", "function"}) {
        if (!report.at("metrics").contains(metric) || !report.at("metrics").at(metric).is_object()) {
            bad(std::string("metrics lacks ") + metric);
        }
        for (const auto& [key, value] : report.at("metrics").at(metric).items()) {
            if (key.rfind("pass@", 0) != 0) bad("metric key '" + key + "' is not pass@k");
            if (!value.is_number()) bad("metric " + key + " is not a number");
            const double v = value.get<double>();
            if (!(v >= 0.0 && v <= 1.0)) bad("metric " + key + " outside [0, 1]");
        }
    }
}

}  // namespace verigrag::harness
