#include "test_support.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <map>

using namespace verigrag;
using namespace verigrag::harness;

namespace {

bool checkers_available() {
    const char* p = std::getenv(kCheckerPathEnv);
    return p != nullptr && *p != '\0';
}

SampleRecord passing(const std::string& task, int i) {
    SampleRecord r;
    r.task_id = task;
    r.sample_index = i;
    r.temperature = 0.2;
    r.code = toy::flip_flop().code;
    r.syntax_pass = true;
    r.function_pass = true;
    return r;
}

}  // namespace

TEST_SUITE("harness") {
    TEST_CASE("pass@k boundary values") {
        CHECK(pass_at_k(20, 20, 1) == 1.0);
        CHECK(pass_at_k(20, 0, 5) == 0.0);
        CHECK(pass_at_k(5, 2, 2) == doctest::Approx(0.7).epsilon(1e-12));
        CHECK_THROWS_AS(pass_at_k(5, 6, 1), DomainError);
        CHECK_THROWS_AS(pass_at_k(5, 1, 0), DomainError);
        CHECK_THROWS_AS(pass_at_k(5, 1, 6), DomainError);
        CHECK_THROWS_AS(pass_at_k(0, 0, 1), DomainError);
    }

    TEST_CASE("pass@k is monotone in c and k") {
        for (int n = 1; n <= 12; ++n) {
            for (int k = 1; k <= n; ++k) {
                for (int c = 1; c <= n; ++c) {
                    CHECK(pass_at_k(n, c, k) >= pass_at_k(n, c - 1, k));
                    if (k > 1) CHECK(pass_at_k(n, c, k) >= pass_at_k(n, c, k - 1));
                }
            }
        }
    }

    TEST_CASE("pass@k agrees with Monte-Carlo draws without replacement") {
        std::mt19937_64 rng(42);
        const int n = 10, c = 3, k = 4, draws = 100000;
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i < c ? 1 : 0;
        int hits = 0;
        for (int d = 0; d < draws; ++d) {
            std::shuffle(pool.begin(), pool.end(), rng);
            bool any = false;
            for (int i = 0; i < k; ++i) any = any || pool[static_cast<std::size_t>(i)] == 1;
            hits += any ? 1 : 0;
        }
        CHECK(std::abs(hits / static_cast<double>(draws) - pass_at_k(n, c, k)) < 0.02);
    }

    TEST_CASE("greedy single-sample generation repeats exactly") {
        const auto pipe = testing::tiny_pipeline(4, 0);
        GenerationConfig cfg;
        cfg.n = 1;
        cfg.temperatures = {0.0};
        cfg.max_new_tokens = 12;
        const auto a = generate_samples("t", "a d flip-flop", pipe, cfg);
        const auto b = generate_samples("t", "a d flip-flop", pipe, cfg);
        REQUIRE(a.records.size() == 1);
        CHECK(a.records[0].code == b.records[0].code);
        CHECK(a.records[0].retrieved_id == b.records[0].retrieved_id);
        CHECK_FALSE(a.records[0].retrieved_id.empty());
        CHECK_FALSE(a.records[0].no_prompt);
    }

    TEST_CASE("temperatures are assigned round-robin") {
        const auto pipe = testing::tiny_pipeline(4, 0);
        GenerationConfig cfg;
        cfg.n = 20;
        cfg.max_new_tokens = 4;
        const auto r = generate_samples("t", "a counter", pipe, cfg);
        REQUIRE(r.records.size() == 20);
        std::map<double, int> counts;
        for (const auto& rec : r.records) ++counts[rec.temperature];
        CHECK(counts[0.2] == 7);
        CHECK(counts[0.5] == 7);
        CHECK(counts[0.8] == 6);
        for (int i = 0; i < 20; ++i) CHECK(r.records[static_cast<std::size_t>(i)].sample_index == i);
    }

    TEST_CASE("an empty index falls back to unprompted generation with a warning") {
        auto pipe = testing::tiny_pipeline(3, 0);
        pipe.index = retrieval::build_index({}, Matrix(0, 16), pipe.student);
        GenerationConfig cfg;
        cfg.n = 2;
        cfg.max_new_tokens = 4;
        const auto r = generate_samples("t", "an adder", pipe, cfg);
        CHECK_FALSE(r.warnings.empty());
        for (const auto& rec : r.records) {
            CHECK(rec.no_prompt);
            CHECK(rec.retrieved_id.empty());
        }
    }

    TEST_CASE("report for one all-passing task") {
        EvalConfig cfg;
        std::vector<SampleRecord> recs;
        for (int i = 0; i < 5; ++i) recs.push_back(passing("ff", i));
        const auto report = build_report({"ff"}, {recs}, cfg, {});
        CHECK_NOTHROW(validate_report(report));
        CHECK(report["metrics"]["function"]["pass@1"] == 1.0);
        CHECK(report["metrics"]["function"]["pass@5"] == 1.0);
        CHECK(report["metrics"]["syntax"]["pass@5"] == 1.0);
        auto broken = report;
        broken.erase("metrics");
        CHECK_THROWS_AS(validate_report(broken), SchemaError);
    }

    TEST_CASE("an empty benchmark directory has no tasks") {
        testing::TempDir dir;
        CHECK_THROWS_AS(load_benchmark(dir.path()), NoTasksError);
    }

    TEST_CASE("benchmark tasks load from their directory") {
        const auto tasks = load_benchmark(testing::fixture_path("benchmark"));
        REQUIRE(tasks.size() == 1);
        CHECK(tasks[0].task_id == "d_flip_flop");
        CHECK(tasks[0].timeout_s == 10.0);
        CHECK(tasks[0].syntax_command.find(kCodeFilePlaceholder) != std::string::npos);
    }

    TEST_CASE("checker timeouts and missing commands") {
        testing::TempDir dir;
        write_text_file(dir / "c.v", "x");
        const auto slow = run_checker("sleep 5", dir / "c.v", 0.3, dir.path());
        CHECK(slow.timed_out);
        CHECK_FALSE(slow.passed);
        CHECK_THROWS_AS(run_checker("verigrag-no-such-checker {code_file}", dir / "c.v", 2.0, dir.path()),
                        CheckerUnavailable);
        CHECK(run_checker("test -f {code_file}", dir / "c.v", 2.0, dir.path()).passed);
        CHECK_FALSE(run_checker("false", dir / "c.v", 2.0, dir.path()).passed);
    }

    TEST_CASE("bundled checkers grade invalid and reference code") {
        if (!checkers_available()) {
            MESSAGE("checker path not set; skipping");
            return;
        }
        const auto task = load_task(testing::fixture_path("benchmark/d_flip_flop"));
        SampleRecord bad;
        bad.task_id = task.task_id;
        bad.code = "module broken (";
        check_sample(bad, task);
        CHECK_FALSE(bad.syntax_pass);
        CHECK_FALSE(bad.function_pass);

        SampleRecord good;
        good.task_id = task.task_id;
        good.code = testing::read_fixture("benchmark/d_flip_flop/solution.v");
        check_sample(good, task);
        CHECK(good.syntax_pass);
        CHECK(good.function_pass);

        SampleRecord wrong;
        wrong.task_id = task.task_id;
        wrong.code = "module d_flip_flop (input clk, input d, output q); assign q = d; endmodule";
        check_sample(wrong, task);
        CHECK(wrong.syntax_pass);
        CHECK_FALSE(wrong.function_pass);
    }

    TEST_CASE("evaluation with a fixed seed is byte-identical") {
        if (!checkers_available()) {
            MESSAGE("checker path not set; skipping");
            return;
        }
        const auto pipe = testing::tiny_pipeline(4, 0);
        EvalConfig cfg;
        cfg.generation.n = 5;
        cfg.generation.max_new_tokens = 8;
        const auto a = evaluate(testing::fixture_path("benchmark"), pipe, cfg);
        const auto b = evaluate(testing::fixture_path("benchmark"), pipe, cfg);
        CHECK(a.dump() == b.dump());
        CHECK_NOTHROW(validate_report(a));
        CHECK(a["tasks"].size() == 1);
        CHECK(a["tasks"][0]["n"] == 5);
    }
}
