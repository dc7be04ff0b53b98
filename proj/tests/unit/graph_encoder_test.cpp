#include "test_support.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/graph_encoder.hpp"

#include <doctest.h>

#include <numeric>

using namespace verigrag;
using namespace verigrag::gnn;

namespace {

GineLayer scalar_layer(double eps) {
    GineLayer l;
    l.epsilon = ag::constant(Matrix::Constant(1, 1, eps));
    return l;
}

Matrix conv(const GineLayer& l, const Matrix& x, const std::vector<std::pair<int, int>>& edges, const Matrix& e) {
    ag::NoGradGuard guard;
    return gine_conv(l, ag::constant(x), edges, ag::constant(e)).value();
}

GraphEncoderConfig small_config() {
    GraphEncoderConfig c;
    c.feature_dim = 16;
    c.hidden_dim = 16;
    c.num_layers = 2;
    c.d_g = 8;
    return c;
}

}  // namespace

TEST_SUITE("graph_encoder") {
    TEST_CASE("hand-computed single-feature convolutions") {
        const auto l = scalar_layer(0.0);
        CHECK(conv(l, Matrix::Constant(1, 1, 1.0), {}, Matrix(0, 1))(0, 0) == 1.0);
        Matrix x(2, 1);
        x << 1.0, 2.0;
        CHECK(conv(l, x, {{1, 0}}, Matrix::Constant(1, 1, -3.0))(0, 0) == 1.0);
        CHECK(conv(l, x, {{1, 0}}, Matrix::Constant(1, 1, 0.5))(0, 0) == 3.5);
        CHECK(conv(scalar_layer(0.5), x, {}, Matrix(0, 1))(1, 0) == 3.0);
    }

    TEST_CASE("convolution matches a per-node loop on random graphs") {
        std::mt19937_64 rng(21);
        nn::ParameterSet params;
        auto layer = GineLayer::create(params, "l", 5, 7, rng);
        layer.epsilon.mutable_value()(0, 0) = 0.3;
        std::normal_distribution<double> nd;
        for (int t = 0; t < 25; ++t) {
            const auto g = testing::random_graph(rng, 8);
            Matrix x = nn::normal_matrix(static_cast<Eigen::Index>(g.nodes.size()), 5, 1.0, rng);
            std::vector<std::pair<int, int>> edges;
            Matrix e(static_cast<Eigen::Index>(g.edges.size()), 1);
            for (std::size_t k = 0; k < g.edges.size(); ++k) {
                edges.emplace_back(g.edges[k].src, g.edges[k].dst);
                e(static_cast<Eigen::Index>(k), 0) = g.edges[k].width_norm;
            }
            CHECK(testing::relative_error(conv(layer, x, edges, e), testing::gine_conv_reference(layer, x, edges, e)) <
                  1e-12);
        }
    }

    TEST_CASE("convolution gradients match finite differences") {
        std::mt19937_64 rng(5);
        nn::ParameterSet params;
        const auto layer = GineLayer::create(params, "l", 3, 4, rng);
        const std::vector<std::pair<int, int>> edges{{0, 1}, {2, 1}, {1, 2}};
        Matrix e(3, 1);
        e << 0.25, 1.0, 0.5;
        const Matrix x = nn::normal_matrix(3, 3, 1.0, rng);
        CHECK(testing::gradient_check(
                  [&](const ag::Tensor& t) { return ag::sum(ag::tanh(gine_conv(layer, t, edges, ag::constant(e)))); },
                  x) < 1e-5);
    }

    TEST_CASE("shape errors") {
        const auto l = scalar_layer(0.0);
        CHECK_THROWS_AS(conv(l, Matrix::Ones(2, 1), {{0, 1}}, Matrix(0, 1)), ShapeError);
        CHECK_THROWS_AS(conv(l, Matrix::Ones(2, 1), {{0, 5}}, Matrix::Ones(1, 1)), ShapeError);
        CHECK_THROWS_AS(conv(l, Matrix::Ones(2, 2), {{0, 1}}, Matrix::Ones(1, 1)), ShapeError);
    }

    TEST_CASE("featurizer is deterministic, unit-norm and sensitive to op type") {
        const NodeFeaturizer f{0, 64};
        netlist::GraphNode a;
        a.kind = netlist::NodeKind::cell;
        a.op_type = "add";
        a.port_names = {"A", "B", "Y"};
        auto b = a;
        b.op_type = "sub";
        CHECK(f.featurize(a) == f.featurize(a));
        CHECK(f.featurize(a).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.featurize(a) != f.featurize(b));
        CHECK(NodeFeaturizer{1, 64}.featurize(a) != f.featurize(a));
    }

    TEST_CASE("encoding is invariant to node order") {
        std::mt19937_64 rng(11);
        const auto enc = GraphEncoder::create(small_config(), 2);
        for (int t = 0; t < 20; ++t) {
            const auto g = testing::random_graph(rng, 20);
            std::vector<int> perm(g.nodes.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            CHECK(testing::relative_error(enc.encode_graph(g), enc.encode_graph(testing::permute_nodes(g, perm))) <
                  1e-9);
        }
    }

    TEST_CASE("empty graphs are rejected") {
        const auto enc = GraphEncoder::create(small_config(), 0);
        netlist::DataPathGraph g;
        CHECK_THROWS_AS(enc.encode_graph(g), EmptyGraphError);
        CHECK_THROWS_AS(augment(g, {}, 0, enc.featurizer()), EmptyGraphError);
    }

    TEST_CASE("identity augmentation returns the plain view") {
        const auto g = testing::toy_extract(3, 0).modules[2].graph;
        const NodeFeaturizer f{0, 16};
        const auto base = make_view(g, f);
        const auto v = augment(g, {0.0, 0.0, 4}, 9, f);
        CHECK(v.x == base.x);
        CHECK(v.edges == base.edges);
        CHECK(v.e == base.e);
    }

    TEST_CASE("augmentation is deterministic per seed and draw") {
        const auto g = testing::toy_extract(5, 0).modules[4].graph;
        const NodeFeaturizer f{0, 16};
        const AugmentationPolicy p{0.3, 0.1, 7};
        const auto a = augment(g, p, 3, f);
        const auto b = augment(g, p, 3, f);
        CHECK(a.x == b.x);
        CHECK(a.edges == b.edges);
        CHECK(augment(g, p, 4, f).x != a.x);
        CHECK_THROWS_AS(augment(g, {1.0, 0.0, 0}, 0, f), ConfigError);
    }

    TEST_CASE("edge dropping keeps the expected fraction and never empties") {
        netlist::DataPathGraph g;
        g.module_name = "chain";
        g.source_sha256 = std::string(64, '0');
        for (int i = 0; i < 11; ++i) {
            netlist::GraphNode n;
            n.id = i;
            n.kind = netlist::NodeKind::cell;
            n.op_type = "not";
            g.nodes.push_back(n);
            if (i > 0) g.edges.push_back({i - 1, i, 1, 1.0});
        }
        const NodeFeaturizer f{0, 8};
        double total = 0;
        const int draws = 10000;
        for (int d = 0; d < draws; ++d) total += static_cast<double>(augment(g, {0.15, 0.0, 1}, d, f).edges.size());
        const double mean = total / draws;
        CHECK(mean >= 8.2);
        CHECK(mean <= 8.8);
        for (int d = 0; d < 200; ++d) CHECK_FALSE(augment(g, {0.99, 0.0, 2}, d, f).edges.empty());
    }

    TEST_CASE("training rejects a corpus that cannot fill a batch") {
        const auto ex = testing::toy_extract(1, 0);
        EncoderTrainConfig cfg;
        cfg.epochs = 1;
        CHECK_THROWS_AS(train_encoder({ex.modules[0].graph}, small_config(), cfg), ConfigError);
    }

    TEST_CASE("a short training run lowers the loss and round-trips its checkpoint") {
        const auto ex = testing::toy_extract(8, 0);
        std::vector<netlist::DataPathGraph> graphs;
        for (const auto& m : ex.modules) graphs.push_back(m.graph);
        EncoderTrainConfig cfg;
        cfg.epochs = 15;
        cfg.batch_size = 8;
        const auto r = train_encoder(graphs, small_config(), cfg);
        CHECK(r.epoch_loss.back() < r.epoch_loss.front());
        const auto back = GraphEncoder::from_checkpoint(checkpoint_from_json(checkpoint_to_json(r.encoder.to_checkpoint())));
        CHECK(back.encode_graph(graphs[3]) == r.encoder.encode_graph(graphs[3]));
        const double recall = view_retrieval_recall(r.encoder, graphs, cfg.augmentation, 100);
        CHECK(recall >= 0.0);
        CHECK(recall <= 1.0);
    }

    TEST_CASE("embedding files round-trip at float precision") {
        testing::TempDir dir;
        std::mt19937_64 rng(1);
        const Matrix m = nn::normal_matrix(3, 4, 1.0, rng);
        write_embeddings(dir / "e.bin", {"a", "b", "c"}, m);
        const auto [ids, back] = read_embeddings(dir / "e.bin");
        CHECK(ids == std::vector<std::string>{"a", "b", "c"});
        CHECK(testing::relative_error(back, m) < 1e-6);
    }
}
