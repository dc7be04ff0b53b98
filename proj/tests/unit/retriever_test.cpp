#include "test_support.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/retriever.hpp"

#include <doctest.h>

#include <algorithm>

using namespace verigrag;
using namespace verigrag::retrieval;

namespace {

RetrieverConfig small_config() {
    RetrieverConfig c;
    c.vocab_buckets = 256;
    c.d_model = 16;
    c.heads = 2;
    c.text_layers = 1;
    c.ffn_hidden = 32;
    c.d_g = 8;
    c.d_r = 8;
    c.graph_hidden = 16;
    c.graph_tokens = 2;
    return c;
}

std::vector<TrainPair> random_pairs(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TrainPair> out;
    const auto mods = toy::modules(static_cast<std::size_t>(n), seed);
    for (const auto& m : mods) out.push_back({m.description, nn::normal_matrix(1, 8, 1.0, rng)});
    return out;
}

std::vector<std::string> numbered_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("g" + std::to_string(1000 + i));
    return ids;
}

}  // namespace

TEST_SUITE("retriever") {
    TEST_CASE("teacher is deterministic per seed and jointly conditioned") {
        const auto a = CrossAttentionEncoder::create(small_config(), 1);
        const auto b = CrossAttentionEncoder::create(small_config(), 1);
        std::mt19937_64 rng(2);
        const RowVector g1 = nn::normal_matrix(1, 8, 1.0, rng);
        const RowVector g2 = nn::normal_matrix(1, 8, 1.0, rng);
        CHECK(a.teacher_encode("a 4-bit counter", g1).first == b.teacher_encode("a 4-bit counter", g1).first);
        const double diff = (a.teacher_encode("a 4-bit counter", g1).first -
                             a.teacher_encode("a 4-bit counter", g2).first).norm();
        CHECK(diff > 1e-6);
        const double s = a.score("a 4-bit counter", g1);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        CHECK_THROWS_AS(a.teacher_encode("   ", g1), EmptyQueryError);
    }

    TEST_CASE("teacher training on an identical batch warns and continues") {
        std::mt19937_64 rng(3);
        const RowVector g = nn::normal_matrix(1, 8, 1.0, rng);
        std::vector<TrainPair> pairs(4, TrainPair{"same text", g});
        auto cfg = RetrieverTrainConfig::teacher_defaults();
        cfg.epochs = 1;
        cfg.batch_size = 4;
        const auto r = train_teacher(pairs, small_config(), cfg);
        CHECK_FALSE(r.warnings.empty());
    }

    TEST_CASE("student without the distillation term is plain InfoNCE and leaves the teacher alone") {
        const auto pairs = random_pairs(8, 4);
        const auto teacher = CrossAttentionEncoder::create(small_config(), 5);
        const auto before = teacher.params().fingerprint();
        auto cfg = RetrieverTrainConfig::student_defaults();
        cfg.epochs = 3;
        cfg.batch_size = 4;
        cfg.mse_weight = 0.0;
        const auto r = distill_student(pairs, teacher, cfg, 6);
        REQUIRE(r.epoch_loss.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(r.epoch_loss[i] == r.epoch_info_nce[i]);
        CHECK(teacher.params().fingerprint() == before);
    }

    TEST_CASE("distillation lowers the distance to the teacher") {
        const auto pairs = random_pairs(8, 7);
        const auto teacher = CrossAttentionEncoder::create(small_config(), 8);
        auto cfg = RetrieverTrainConfig::student_defaults();
        cfg.epochs = 30;
        cfg.batch_size = 4;
        const auto r = distill_student(pairs, teacher, cfg, 9);
        CHECK(r.final_mse < r.initial_mse);
        CHECK(r.final_mse == doctest::Approx(student_teacher_mse(r.student, teacher, pairs)).epsilon(1e-9));
    }

    TEST_CASE("an empty index returns nothing") {
        const auto student = DualEncoder::create(small_config(), 0);
        const auto idx = build_index({}, Matrix(0, 8), student);
        CHECK(retrieve(idx, "anything", student, 5).empty());
    }

    TEST_CASE("a one-entry index returns that entry with its cosine") {
        const auto student = DualEncoder::create(small_config(), 0);
        std::mt19937_64 rng(1);
        const Matrix g = nn::normal_matrix(1, 8, 1.0, rng);
        const auto idx = build_index({"only"}, g, student);
        const auto hits = retrieve(idx, "a register", student, 3);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].id == "only");
        const RowVector q = student.encode_query("a register");
        const RowVector v = student.encode_graph_rows(g).row(0);
        CHECK(hits[0].score == doctest::Approx(q.dot(v) / (q.norm() * v.norm())).epsilon(1e-12));
    }

    TEST_CASE("indexed vectors are unit rows consistent with the graph tower") {
        const auto student = DualEncoder::create(small_config(), 2);
        std::mt19937_64 rng(2);
        const Matrix g = nn::normal_matrix(100, 8, 1.0, rng);
        const auto idx = build_index(numbered_ids(100), g, student);
        REQUIRE(idx.size() == 100);
        const Matrix fresh = student.encode_graph_rows(g);
        for (Eigen::Index i = 0; i < 100; ++i) {
            CHECK(idx.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(testing::relative_error(idx.vectors.row(i), fresh.row(i) / fresh.row(i).norm()) < 1e-12);
        }
    }

    TEST_CASE("duplicate ids, k clamping and invalid k") {
        const auto student = DualEncoder::create(small_config(), 0);
        std::mt19937_64 rng(3);
        const Matrix g = nn::normal_matrix(3, 8, 1.0, rng);
        CHECK_THROWS_AS(build_index({"a", "b", "a"}, g, student), DuplicateIdError);
        const auto idx = build_index({"a", "b", "c"}, g, student);
        CHECK(retrieve(idx, "adder", student, 10).size() == 3);
        CHECK_THROWS_AS(retrieve(idx, "adder", student, 0), DomainError);
        CHECK_THROWS_AS(retrieve(idx, "", student, 1), EmptyQueryError);
    }

    TEST_CASE("ties resolve to the lower id") {
        RetrievalIndex idx;
        idx.dim = 2;
        idx.ids = {"b", "a", "c"};
        idx.vectors.resize(3, 2);
        idx.vectors << 1, 0, 1, 0, 0, 1;
        RowVector q(2);
        q << 1, 0;
        const auto hits = search(idx, q, 3);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].id == "a");
        CHECK(hits[1].id == "b");
        CHECK(hits[2].id == "c");
    }

    TEST_CASE("search agrees with brute-force ranking and scores stay in [-1, 1]") {
        const auto student = DualEncoder::create(small_config(), 4);
        std::mt19937_64 rng(4);
        const Matrix g = nn::normal_matrix(40, 8, 1.0, rng);
        const auto ids = numbered_ids(40);
        const auto idx = build_index(ids, g, student);
        for (const char* query : {"a counter", "an adder with carry", "mux"}) {
            const RowVector q = student.encode_query(query);
            std::vector<std::pair<double, std::string>> brute;
            for (Eigen::Index i = 0; i < 40; ++i) {
                brute.emplace_back(-q.dot(idx.vectors.row(i)) / q.norm(), ids[static_cast<std::size_t>(i)]);
            }
            std::sort(brute.begin(), brute.end());
            const auto hits = retrieve(idx, query, student, 7);
            REQUIRE(hits.size() == 7);
            for (std::size_t i = 0; i < 7; ++i) {
                CHECK(hits[i].id == brute[i].second);
                CHECK(hits[i].score == doctest::Approx(-brute[i].first).epsilon(1e-12));
                CHECK(hits[i].score >= -1.0);
                CHECK(hits[i].score <= 1.0);
            }
        }
    }

    TEST_CASE("index and checkpoints round-trip through files") {
        testing::TempDir dir;
        const auto student = DualEncoder::create(small_config(), 5);
        save_checkpoint(dir / "s.json", student.to_checkpoint());
        const auto back = DualEncoder::from_checkpoint(load_checkpoint(dir / "s.json"));
        CHECK(back.params().fingerprint() == student.params().fingerprint());
        std::mt19937_64 rng(5);
        const auto idx = build_index(numbered_ids(5), nn::normal_matrix(5, 8, 1.0, rng), student);
        save_index(dir / "i.json", idx);
        const auto loaded = load_index(dir / "i.json");
        CHECK(loaded.ids == idx.ids);
        CHECK(testing::relative_error(loaded.vectors, idx.vectors) < 1e-6);
        const auto teacher = CrossAttentionEncoder::create(small_config(), 6);
        CHECK(CrossAttentionEncoder::from_checkpoint(checkpoint_from_json(checkpoint_to_json(teacher.to_checkpoint())))
                  .params()
                  .fingerprint() == teacher.params().fingerprint());
        CHECK_THROWS_AS(DualEncoder::from_checkpoint(teacher.to_checkpoint()), SchemaError);
    }
}
