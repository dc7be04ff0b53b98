#include "test_support.hpp"

#include "verigrag/checkpoint.hpp"
#include "verigrag/graph_encoder.hpp"
#include "verigrag/language_model.hpp"
#include "verigrag/nn.hpp"
#include "verigrag/retriever.hpp"
#include "verigrag/veriformer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include <unistd.h>

namespace verigrag::testing {

namespace fs = std::filesystem;

fs::path fixture_path(std::string_view relative) { return fs::path(VERIGRAG_FIXTURE_DIR) / relative; }

std::string read_fixture(std::string_view relative) { return read_text_file(fixture_path(relative)); }

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("verigrag-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

netlist::DataPathGraph random_graph(std::mt19937_64& rng, int max_nodes, int w_max) {
    static const char* kOps[] = {"add", "sub", "and", "or", "xor", "not", "mux", "eq", "dff", "concat"};
    std::uniform_int_distribution<int> count(1, max_nodes);
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_int_distribution<int> op(0, 9);
    std::uniform_int_distribution<int> width(1, w_max);
    netlist::DataPathGraph g;
    g.module_name = "random";
    g.source_sha256 = std::string(64, '0');
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        netlist::GraphNode node;
        node.id = i;
        switch (kind(rng)) {
            case 0:
                node.kind = netlist::NodeKind::port_in;
                node.op_type = "port";
                node.io_type = "input";
                node.port_names = {"in" + std::to_string(i)};
                break;
            case 1:
                node.kind = netlist::NodeKind::port_out;
                node.op_type = "port";
                node.io_type = "output";
                node.port_names = {"out" + std::to_string(i)};
                break;
            case 2:
                node.kind = netlist::NodeKind::constant;
                node.op_type = "const";
                node.params = {{"VALUE", std::to_string(i)}};
                break;
            default:
                node.kind = netlist::NodeKind::cell;
                node.op_type = kOps[op(rng)];
                node.port_names = {"A", "B", "Y"};
                break;
        }
        g.nodes.push_back(node);
    }
    std::bernoulli_distribution keep(std::min(1.0, 2.5 / std::max(1, n)));
    for (int s = 0; s < n; ++s) {
        if (g.nodes[s].kind == netlist::NodeKind::port_out) continue;
        for (int d = 0; d < n; ++d) {
            if (s == d || g.nodes[d].kind == netlist::NodeKind::port_in) continue;
            if (!keep(rng)) continue;
            const int w = width(rng);
            g.edges.push_back({s, d, w, netlist::normalize_edge_width(w, w_max)});
        }
    }
    return g;
}

netlist::DataPathGraph permute_nodes(const netlist::DataPathGraph& g, const std::vector<int>& perm) {
    netlist::DataPathGraph out = g;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        auto node = g.nodes[i];
        node.id = perm[i];
        out.nodes[static_cast<std::size_t>(perm[i])] = node;
    }
    for (auto& e : out.edges) {
        e.src = perm[static_cast<std::size_t>(e.src)];
        e.dst = perm[static_cast<std::size_t>(e.dst)];
    }
    std::sort(out.edges.begin(), out.edges.end(),
              [](const auto& a, const auto& b) { return std::tie(a.src, a.dst, a.width) < std::tie(b.src, b.dst, b.width); });
    return out;
}

double relative_error(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const double up = f(probe);
        probe.data()[i] = orig - h;
        const double down = f(probe);
        probe.data()[i] = orig;
        grad.data()[i] = (up - down) / (2 * h);
    }
    return grad;
}

double gradient_check(const std::function<ag::Tensor(const ag::Tensor&)>& f, const Matrix& x, double h) {
    ag::Tensor p = ag::Tensor::parameter(x);
    ag::backward(f(p));
    const Matrix analytic = p.grad().size() == 0 ? Matrix::Zero(x.rows(), x.cols()) : p.grad();
    const Matrix numeric = numeric_gradient(
        [&](const Matrix& m) {
            ag::NoGradGuard guard;
            return f(ag::constant(m)).item();
        },
        x, h);
    return relative_error(analytic, numeric);
}

namespace {

RowVector linear_reference(const nn::Linear& l, const RowVector& v) {
    RowVector out = l.bias.value();
    for (Eigen::Index j = 0; j < out.size(); ++j) {
        for (Eigen::Index i = 0; i < v.size(); ++i) out(j) += v(i) * l.weight.value()(i, j);
    }
    return out;
}

}  // namespace

Matrix gine_conv_reference(const gnn::GineLayer& layer, const Matrix& x, const std::vector<std::pair<int, int>>& edges,
                           const Matrix& e) {
    const double eps = layer.epsilon.value()(0, 0);
    Matrix h(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        RowVector acc = (1.0 + eps) * x.row(i);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            if (edges[k].second != i) continue;
            const RowVector ek = e.row(static_cast<Eigen::Index>(k));
            const RowVector proj = layer.edge_proj ? linear_reference(*layer.edge_proj, ek) : ek;
            for (Eigen::Index c = 0; c < acc.size(); ++c) acc(c) += std::max(0.0, x(edges[k].first, c) + proj(c));
        }
        h.row(i) = acc;
    }
    if (!layer.mlp) return h;
    Matrix out(h.rows(), layer.mlp->fc2.out_features());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        RowVector mid = linear_reference(layer.mlp->fc1, h.row(i));
        for (Eigen::Index c = 0; c < mid.size(); ++c) mid(c) = std::max(0.0, mid(c));
        out.row(i) = linear_reference(layer.mlp->fc2, mid);
    }
    return out;
}

double info_nce_reference(const Matrix& z1, const Matrix& z2, double tau) {
    const Eigen::Index b = z1.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        std::vector<double> logits;
        double top = -1e300;
        for (Eigen::Index j = 0; j < b; ++j) {
            const double cos = z1.row(i).dot(z2.row(j)) / (z1.row(i).norm() * z2.row(j).norm());
            logits.push_back(cos / tau);
            top = std::max(top, cos / tau);
        }
        double denom = 0.0;
        for (double l : logits) denom += std::exp(l - top);
        total += -(logits[static_cast<std::size_t>(i)] - top - std::log(denom));
    }
    return total / static_cast<double>(b);
}

corpus::ExtractResult toy_extract(std::size_t count, std::uint64_t seed) {
    std::vector<netlist::VerilogSource> sources;
    std::vector<std::string> descriptions;
    for (const auto& m : toy::modules(count, seed)) {
        sources.push_back(netlist::VerilogSource::from_text(m.name + ".v", m.code));
        descriptions.push_back(m.description);
    }
    corpus::ExtractOptions opt;
    opt.dedup = false;
    return corpus::extract_sources(sources, descriptions, opt);
}

harness::Pipeline tiny_pipeline(std::size_t count, std::uint64_t seed) {
    const auto ex = toy_extract(count, seed);
    gnn::GraphEncoderConfig gc;
    gc.feature_dim = 16;
    gc.hidden_dim = 16;
    gc.num_layers = 2;
    gc.d_g = 16;
    const auto enc = gnn::GraphEncoder::create(gc, seed);

    retrieval::RetrieverConfig rc;
    rc.vocab_buckets = 256;
    rc.max_len = 48;
    rc.d_model = 16;
    rc.heads = 2;
    rc.text_layers = 1;
    rc.ffn_hidden = 32;
    rc.d_g = 16;
    rc.d_r = 16;
    rc.graph_hidden = 16;
    rc.graph_tokens = 2;

    harness::Pipeline p;
    p.student = retrieval::DualEncoder::create(rc, seed);
    std::vector<std::string> ids;
    Matrix embs(static_cast<Eigen::Index>(ex.modules.size()), gc.d_g);
    std::vector<lm::Example> examples;
    std::vector<std::vector<std::string>> code_streams;
    for (std::size_t i = 0; i < ex.modules.size(); ++i) {
        const auto& m = ex.modules[i];
        ids.push_back(m.graph_id);
        embs.row(static_cast<Eigen::Index>(i)) = enc.encode_graph(m.graph);
        p.graph_embeddings[m.graph_id] = embs.row(static_cast<Eigen::Index>(i));
        examples.push_back({m.description, m.code});
        code_streams.push_back(text::code_tokens(m.code));
    }
    p.index = retrieval::build_index(ids, embs, p.student);

    vf::VeriFormerConfig vc;
    vc.queries = 2;
    vc.d_v = 16;
    vc.heads = 2;
    vc.layers = 1;
    vc.ffn_hidden = 32;
    vc.graph_tokens = 2;
    vc.d_g = 16;
    vc.max_code_len = 64;
    const auto stage1 = vf::VeriFormer::create(vc, text::Vocabulary::build(code_streams), seed);

    lm::LmConfig lc;
    lc.d_llm = 16;
    lc.heads = 2;
    lc.layers = 1;
    lc.ffn_hidden = 32;
    p.lm = lm::TinyLm::create(lm::TinyLm::build_vocabulary(examples), lc, seed);
    p.prompt_model = vf::SoftPromptModel::from_stage1(stage1, lc.d_llm, seed);
    return p;
}

}  // namespace verigrag::testing
