#include "test_support.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/veriformer.hpp"

#include <doctest.h>

#include <cmath>

using namespace verigrag;
using namespace verigrag::vf;

namespace {

VeriFormerConfig small_config() {
    VeriFormerConfig c;
    c.queries = 3;
    c.d_v = 8;
    c.heads = 2;
    c.layers = 1;
    c.ffn_hidden = 16;
    c.graph_tokens = 2;
    c.d_g = 6;
    c.max_code_len = 48;
    return c;
}

text::Vocabulary toy_vocab() {
    std::vector<std::vector<std::string>> streams;
    for (const auto& m : toy::modules(65, 0)) streams.push_back(text::code_tokens(m.code));
    return text::Vocabulary::build(streams);
}

VeriFormer model(std::uint64_t seed = 1) { return VeriFormer::create(small_config(), toy_vocab(), seed); }

RowVector random_row(std::mt19937_64& rng, Eigen::Index n) { return nn::normal_matrix(1, n, 1.0, rng); }

Matrix run(const std::function<Tensor()>& f) {
    ag::NoGradGuard guard;
    return f().value();
}

}  // namespace

TEST_SUITE("veriformer") {
    TEST_CASE("attention masks") {
        const Matrix uni = attention_mask(MaskMode::unimodal, 2, 3);
        const Matrix bi = attention_mask(MaskMode::bidirectional, 2, 3);
        const Matrix causal = attention_mask(MaskMode::multimodal_causal, 2, 3);
        CHECK(bi.isZero());
        CHECK(uni.block(0, 2, 2, 3).isConstant(nn::kMaskedOut));
        CHECK(uni.block(2, 0, 3, 2).isConstant(nn::kMaskedOut));
        CHECK(causal.block(2, 0, 3, 2).isZero());
        CHECK(causal.block(0, 2, 2, 3).isConstant(nn::kMaskedOut));
        CHECK(causal(2, 3) == nn::kMaskedOut);
        CHECK(causal(4, 3) == 0.0);
        const std::vector<bool> pad{false, true, false};
        CHECK(attention_mask(MaskMode::bidirectional, 2, 3, &pad).col(3).isConstant(nn::kMaskedOut));
    }

    TEST_CASE("graph pass is deterministic and sensitive to the embedding") {
        const auto a = model(1);
        const auto b = model(1);
        std::mt19937_64 rng(2);
        const RowVector g1 = random_row(rng, 6), g2 = random_row(rng, 6);
        const Matrix o1 = run([&] { return a.forward_graph(a.graph_token_sequence(ag::constant(g1))); });
        CHECK(o1.rows() == 3);
        CHECK(o1.cols() == 8);
        CHECK(o1 == run([&] { return b.forward_graph(b.graph_token_sequence(ag::constant(g1))); }));
        CHECK((o1 - run([&] { return a.forward_graph(a.graph_token_sequence(ag::constant(g2))); })).norm() > 1e-6);
        CHECK_THROWS_AS(a.graph_token_sequence(ag::constant(Matrix::Zero(1, 5))), ShapeError);
    }

    TEST_CASE("a zero embedding through a zero-bias expansion gives identical cross-attention rows") {
        const auto m = model(3);
        Tensor bias = m.expansion().bias;
        bias.mutable_value().setZero();
        const Tensor tokens = m.graph_token_sequence(ag::constant(Matrix::Zero(1, 6)));
        std::mt19937_64 rng(3);
        const Matrix queries = nn::normal_matrix(3, 8, 1.0, rng);
        const auto& block = m.blocks().front();
        const Matrix out = run([&] { return block.cross(block.ln_cross(ag::constant(queries)), tokens); });
        for (Eigen::Index i = 1; i < out.rows(); ++i) CHECK((out.row(i) - out.row(0)).norm() < 1e-12);
    }

    TEST_CASE("code pass ignores padding and separates snippets") {
        const auto m = model(4);
        const auto ids = m.encode_code("assign y = a & b;");
        const Matrix base = run([&] { return m.forward_code(ids); });
        CHECK(base.rows() == 1);
        auto padded = ids;
        padded.insert(padded.end(), {0, 0, 0});
        CHECK((run([&] { return m.forward_code(padded); }) - base).norm() < 1e-12);
        const std::vector<int> single{ids[1]};
        CHECK(run([&] { return m.forward_code(single); }).allFinite());
        const Matrix other = run([&] { return m.forward_code(m.encode_code("assign y = a | b;")); });
        CHECK((other - base).norm() > 1e-6);
        const std::vector<int> pads{0, 0};
        CHECK_THROWS_AS(m.forward_code(pads), EmptyCodeError);
        CHECK_THROWS_AS(m.encode_code("// only a comment"), EmptyCodeError);
    }

    TEST_CASE("alignment score is the best query cosine") {
        Matrix q(2, 3);
        q << 1, 0, 0, 0, 2, 0;
        RowVector c(3);
        c << 0, 1, 0;
        CHECK(run([&] { return alignment_score(ag::constant(q), ag::constant(c)); })(0, 0) ==
              doctest::Approx(1.0));
        RowVector orth(3);
        orth << 0, 0, 1;
        CHECK(run([&] { return alignment_score(ag::constant(q), ag::constant(orth)); })(0, 0) ==
              doctest::Approx(0.0));

        std::mt19937_64 rng(5);
        for (int t = 0; t < 20; ++t) {
            const Matrix qs = nn::normal_matrix(4, 5, 1.0, rng);
            const RowVector cv = random_row(rng, 5);
            double best = -2.0;
            for (Eigen::Index i = 0; i < 4; ++i) best = std::max(best, qs.row(i).dot(cv) / (qs.row(i).norm() * cv.norm()));
            CHECK(run([&] { return alignment_score(ag::constant(qs), ag::constant(cv)); })(0, 0) ==
                  doctest::Approx(best).epsilon(1e-12));
        }
    }

    TEST_CASE("graph-code contrast on two orthonormal pairs") {
        Matrix q0(2, 2), q1(2, 2);
        q0 << 1, 0, 1, 0;
        q1 << 0, 1, 0, 1;
        const std::vector<Tensor> qs{ag::constant(q0), ag::constant(q1)};
        const Tensor codes = ag::constant(Matrix::Identity(2, 2));
        CHECK(run([&] { return gcc_loss(qs, codes, 1.0); })(0, 0) == doctest::Approx(0.313262).epsilon(1e-5));
        CHECK_THROWS_AS(gcc_loss(qs, codes, 0.0), DomainError);
        CHECK_THROWS_AS(gcc_loss({qs[0]}, ag::constant(Matrix::Identity(1, 2)), 1.0), DegenerateBatch);
    }

    TEST_CASE("graph-code contrast gradient matches finite differences") {
        std::mt19937_64 rng(6);
        const Matrix q0 = nn::normal_matrix(3, 4, 1.0, rng);
        const Matrix q1 = nn::normal_matrix(3, 4, 1.0, rng);
        const Matrix codes = nn::normal_matrix(2, 4, 1.0, rng);
        CHECK(testing::gradient_check(
                  [&](const Tensor& c) { return gcc_loss({ag::constant(q0), ag::constant(q1)}, c, 0.5); }, codes) <
              1e-4);
    }

    TEST_CASE("matching score is the mean of the per-query logits") {
        CHECK(run([] {
                  Matrix v(3, 1);
                  v << 2.0, -1.0, 0.5;
                  return ag::mean(ag::constant(v));
              })(0, 0) == 0.5);
        const auto m = model(7);
        std::mt19937_64 rng(7);
        const Tensor tokens = m.graph_token_sequence(ag::constant(random_row(rng, 6)));
        const auto ids = m.encode_code("q <= d;");
        const Matrix logits = run([&] { return m.matching_logits(tokens, ids); });
        CHECK(logits.rows() == 3);
        CHECK(run([&] { return m.matching_score(tokens, ids); })(0, 0) == doctest::Approx(logits.mean()).epsilon(1e-12));
    }

    TEST_CASE("matching loss rejects single-label batches and has tape gradients") {
        const auto m = model(8);
        std::mt19937_64 rng(8);
        const Tensor tokens = m.graph_token_sequence(ag::constant(random_row(rng, 6)));
        const auto a = m.encode_code("assign y = a;");
        const auto b = m.encode_code("assign y = ~a;");
        CHECK_THROWS_AS(gcm_loss(m, {{tokens, a, 1.0}, {tokens, b, 1.0}}), DegenerateBatch);
        const Matrix g = random_row(rng, 6);
        CHECK(testing::gradient_check(
                  [&](const Tensor& e) {
                      const Tensor t = m.graph_token_sequence(e);
                      return gcm_loss(m, {{t, a, 1.0}, {t, b, 0.0}});
                  },
                  g) < 1e-4);
    }

    TEST_CASE("an untrained model matches at chance") {
        const auto m = model(9);
        std::mt19937_64 rng(9);
        std::vector<Stage1Pair> pairs;
        const auto mods = toy::modules(65, 0);
        for (int i = 0; i < 100; ++i) pairs.push_back({random_row(rng, 6), mods[static_cast<std::size_t>(i % 65)].code});
        const double acc = matching_accuracy(m, pairs);
        CHECK(acc >= 0.35);
        CHECK(acc <= 0.65);
    }

    TEST_CASE("hard negatives are the best-scoring mismatch") {
        Matrix s(3, 3);
        s << 1.0, 0.2, 0.7, 0.9, 1.0, 0.1, 0.3, 0.4, 1.0;
        std::mt19937_64 rng(0);
        const auto neg = select_negatives(s, rng);
        REQUIRE(neg.size() == 3);
        CHECK(neg[0].first == 2);
        CHECK(neg[1].first == 0);
        CHECK(neg[2].first == 1);
        for (std::size_t i = 0; i < 3; ++i) CHECK(neg[i].second != static_cast<int>(i));
    }

    TEST_CASE("a uniform head gives ln V") {
        const auto m = model(10);
        Tensor w = m.lm_head().weight, b = m.lm_head().bias;
        w.mutable_value().setZero();
        b.mutable_value().setZero();
        std::mt19937_64 rng(10);
        const Tensor tokens = m.graph_token_sequence(ag::constant(random_row(rng, 6)));
        const auto ids = m.encode_code("assign y = a ^ b;");
        CHECK(run([&] { return gcg_loss(m, tokens, ids); })(0, 0) ==
              doctest::Approx(std::log(static_cast<double>(m.code_vocab().size()))).epsilon(1e-12));
        const std::vector<int> one{2};
        CHECK_THROWS_AS(gcg_loss(m, tokens, one), EmptyCodeError);
    }

    TEST_CASE("generation overfits one sample") {
        auto m = model(11);
        std::mt19937_64 rng(11);
        const RowVector g = random_row(rng, 6);
        const auto ids = m.encode_code(toy::flip_flop().code);
        nn::AdamW opt(m.all_tensors());
        double loss = 0;
        for (int step = 0; step < 150; ++step) {
            opt.zero_grad();
            const Tensor l = gcg_loss(m, m.graph_token_sequence(ag::constant(g)), ids);
            loss = l.item();
            ag::backward(l);
            opt.step(1e-2);
        }
        CHECK(loss < 0.1);
    }

    TEST_CASE("generation is causal over code and sees every query") {
        // One block only lets code read the bank; the graph reaches code from the second block on.
        auto cfg = small_config();
        cfg.layers = 2;
        const auto m = VeriFormer::create(cfg, toy_vocab(), 12);
        std::mt19937_64 rng(12);
        const Tensor t1 = m.graph_token_sequence(ag::constant(random_row(rng, 6)));
        const Tensor t2 = m.graph_token_sequence(ag::constant(random_row(rng, 6)));
        const auto ids = m.encode_code("always @(posedge clk) q <= d;");
        const Matrix emb = run([&] { return m.code_embeddings(ids); });
        const Matrix base = run([&] { return m.generation_position_losses(t1, ag::constant(emb), ids); });
        const Eigen::Index cut = 5;
        Matrix zeroed = emb;
        zeroed.row(cut).setZero();
        const Matrix changed = run([&] { return m.generation_position_losses(t1, ag::constant(zeroed), ids); });
        CHECK((changed.topRows(cut) - base.topRows(cut)).norm() < 1e-12);
        CHECK((changed.bottomRows(changed.rows() - cut) - base.bottomRows(base.rows() - cut)).norm() > 1e-9);
        const Matrix other = run([&] { return m.generation_position_losses(t2, ag::constant(emb), ids); });
        for (Eigen::Index i = 0; i < base.rows(); ++i) CHECK(std::abs(other(i, 0) - base(i, 0)) > 1e-12);
    }

    TEST_CASE("soft-prompt projection") {
        nn::ParameterSet ps;
        std::mt19937_64 rng(13);
        auto lin = nn::Linear::create(ps, "p", 4, 4, rng);
        lin.weight.mutable_value().setIdentity();
        lin.bias.mutable_value().setZero();
        const Matrix q = nn::normal_matrix(3, 4, 1.0, rng);
        CHECK(run([&] { return project_soft_prompt(lin, ag::constant(q)); }) == q);
        auto affine = nn::Linear::create(ps, "a", 4, 6, rng);
        const Matrix zero_out = run([&] { return project_soft_prompt(affine, ag::constant(Matrix::Zero(3, 4))); });
        for (Eigen::Index i = 0; i < 3; ++i) CHECK(zero_out.row(i) == affine.bias.value().row(0));
        CHECK_THROWS_AS(project_soft_prompt(affine, ag::constant(Matrix::Zero(3, 5))), ShapeError);
    }

    TEST_CASE("distribution loss hand case, identity and non-negativity") {
        Matrix z(1, 2), g(1, 2);
        z << std::log(0.5), std::log(0.5);
        g << std::log(0.9), std::log(0.1);
        const auto kl = [](const Matrix& a, const Matrix& b) {
            return run([&] { return kl_distribution_loss(ag::constant(a), ag::constant(b)); })(0, 0);
        };
        CHECK(kl(z, g) == doctest::Approx(0.510826).epsilon(1e-5));
        CHECK(kl(g, g) == doctest::Approx(0.0).epsilon(1e-15));
        std::mt19937_64 rng(14);
        for (int t = 0; t < 1000; ++t) {
            const Matrix a = nn::normal_matrix(1 + static_cast<int>(rng() % 4), 5, 2.0, rng);
            const Matrix b = nn::normal_matrix(1 + static_cast<int>(rng() % 4), 5, 2.0, rng);
            CHECK(kl(a, b) >= -1e-12);
        }
        CHECK_THROWS_AS(kl(Matrix::Zero(1, 2), Matrix::Zero(1, 3)), ShapeError);
        CHECK_THROWS_AS(kl_distribution_loss(ag::constant(Matrix::Zero(2, 3)), ag::constant(Matrix::Zero(3, 3)),
                                             KlPairing::per_row),
                        ShapeError);
    }

    TEST_CASE("distribution loss gradient matches finite differences") {
        std::mt19937_64 rng(15);
        const Matrix z = nn::normal_matrix(3, 5, 1.0, rng);
        const Matrix g = nn::normal_matrix(4, 5, 1.0, rng);
        CHECK(testing::gradient_check([&](const Tensor& t) { return kl_distribution_loss(ag::constant(z), t); }, g) <
              1e-4);
        const Matrix g3 = nn::normal_matrix(3, 5, 1.0, rng);
        CHECK(testing::gradient_check(
                  [&](const Tensor& t) { return kl_distribution_loss(ag::constant(z), t, KlPairing::per_row); }, g3) <
              1e-4);
    }

    TEST_CASE("stage-2 loss without the distribution term is the generation loss") {
        const auto pipe = testing::tiny_pipeline(3, 0);
        const auto& sample_graph = pipe.graph_embeddings.begin()->second;
        const Stage2Sample s{"a flip flop", sample_graph, toy::flip_flop().code};
        ag::NoGradGuard guard;
        const auto l = stage2_loss(pipe.prompt_model, pipe.lm, s, 0.0);
        CHECK(l.total.item() == l.gen.item());
        const auto l2 = stage2_loss(pipe.prompt_model, pipe.lm, s, 0.5);
        CHECK(l2.total.item() == doctest::Approx(l2.gen.item() + 0.5 * l2.dist.item()).epsilon(1e-12));
    }

    TEST_CASE("stage-2 training leaves the language model untouched") {
        std::mt19937_64 rng(18);
        std::vector<Stage2Sample> samples;
        std::vector<lm::Example> examples;
        for (const auto& mod : toy::modules(6, 0)) {
            samples.push_back({mod.description, random_row(rng, 6), mod.code});
            examples.push_back({mod.description, mod.code});
        }
        lm::LmConfig lc;
        lc.d_llm = 8;
        lc.heads = 2;
        lc.layers = 1;
        lc.ffn_hidden = 16;
        const auto frozen = lm::TinyLm::create(lm::TinyLm::build_vocabulary(examples), lc, 4);
        const auto before = frozen.params().fingerprint();
        Stage2Config cfg;
        cfg.epochs = 2;
        const auto r = stage2_train(samples, model(18), frozen, cfg);
        CHECK(frozen.params().fingerprint() == before);
        CHECK(r.model.d_llm() == 8);
        CHECK(r.epoch_total.size() <= 2);
        CHECK(std::isfinite(r.final_dist));
    }

    TEST_CASE("soft prompt model round-trips and has the expected shape") {
        const auto m = model(16);
        const auto sp = SoftPromptModel::from_stage1(m, 10, 3);
        std::mt19937_64 rng(16);
        const RowVector g = random_row(rng, 6);
        const Matrix prompt = sp.soft_prompt(g);
        CHECK(prompt.rows() == 3);
        CHECK(prompt.cols() == 10);
        const auto back = SoftPromptModel::from_checkpoint(checkpoint_from_json(checkpoint_to_json(sp.to_checkpoint())));
        CHECK(back.fingerprint() == sp.fingerprint());
        CHECK(back.soft_prompt(g) == prompt);
        const auto vf1 = VeriFormer::from_checkpoint(checkpoint_from_json(checkpoint_to_json(m.to_checkpoint())));
        CHECK(vf1.graph_params().fingerprint() == m.graph_params().fingerprint());
        CHECK(vf1.code_params().fingerprint() == m.code_params().fingerprint());
        CHECK_THROWS_AS(VeriFormer::from_checkpoint(sp.to_checkpoint()), SchemaError);
    }

    TEST_CASE("a short stage-1 run reports all three losses and does not touch its inputs") {
        std::mt19937_64 rng(17);
        std::vector<Stage1Pair> pairs;
        for (const auto& mod : toy::modules(8, 0)) pairs.push_back({random_row(rng, 6), mod.code});
        const auto copy = pairs;
        Stage1Config cfg;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        const auto r = stage1_train(pairs, small_config(), cfg);
        CHECK(r.gcc.size() == 2);
        CHECK(r.gcm.size() == 2);
        CHECK(r.gcg.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(r.total[i] == doctest::Approx(r.gcc[i] + r.gcm[i] + r.gcg[i]).epsilon(1e-9));
        }
        for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(pairs[i].graph_embedding == copy[i].graph_embedding);
    }
}
