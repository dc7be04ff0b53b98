#include "verigrag/graph_encoder.hpp"

#include "verigrag/contrastive.hpp"
#include "verigrag/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace verigrag::gnn {

GineLayer GineLayer::create(nn::ParameterSet& params, const std::string& name, Eigen::Index in_dim,
                            Eigen::Index out_dim, std::mt19937_64& rng) {
    GineLayer l;
    l.epsilon = params.add(name + ".epsilon", Matrix::Zero(1, 1));
    l.edge_proj = nn::Linear::create(params, name + ".edge_proj", 1, in_dim, rng);
    l.mlp = nn::Mlp::create(params, name + ".mlp", in_dim, out_dim, out_dim, rng);
    return l;
}

Tensor gine_conv(const GineLayer& layer, const Tensor& x, std::span<const std::pair<int, int>> edges,
                 const Tensor& e) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (e.rows() != static_cast<Eigen::Index>(edges.size())) throw ShapeError("gine_conv: one edge feature row per edge");
    if (layer.edge_proj) {
        if (e.cols() != layer.edge_proj->in_features() || layer.edge_proj->out_features() != d) {
            throw ShapeError("gine_conv: edge_proj does not map edge features to the node dimension");
        }
    } else if (!edges.empty() && e.cols() != d) {
        throw ShapeError("gine_conv: identity edge_proj needs edge and node dimensions to match");
    }
    if (layer.mlp && layer.mlp->fc1.in_features() != d) throw ShapeError("gine_conv: h_theta input width mismatch");

    Tensor h = ag::scale_by(x, ag::add_scalar(layer.epsilon, 1.0));
    if (!edges.empty()) {
        std::vector<int> src, dst;
        src.reserve(edges.size());
        dst.reserve(edges.size());
        for (const auto& [s, t] : edges) {
            if (s < 0 || s >= n || t < 0 || t >= n) throw ShapeError("gine_conv: edge endpoint out of range");
            src.push_back(s);
            dst.push_back(t);
        }
        Tensor ep = layer.edge_proj ? (*layer.edge_proj)(e) : e;
        Tensor messages = ag::relu(ag::add(ag::gather_rows(x, src), ep));
        h = ag::add(h, ag::scatter_add_rows(messages, dst, n));
    }
    return layer.mlp ? (*layer.mlp)(h) : h;
}

nlohmann::ordered_json GraphEncoderConfig::to_json() const {
    return {{"feature_dim", feature_dim},
            {"hidden_dim", hidden_dim},
            {"num_layers", num_layers},
            {"d_g", d_g},
            {"featurizer_seed", featurizer_seed}};
}

GraphEncoderConfig GraphEncoderConfig::from_json(const nlohmann::json& j) {
    GraphEncoderConfig c;
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.d_g = j.value("d_g", c.d_g);
    c.featurizer_seed = j.value("featurizer_seed", c.featurizer_seed);
    return c;
}

GraphEncoder GraphEncoder::create(const GraphEncoderConfig& config, std::uint64_t seed) {
    if (config.feature_dim < 1 || config.hidden_dim < 1 || config.num_layers < 1 || config.d_g < 1) {
        throw ConfigError("graph encoder dimensions and depth must be positive");
    }
    GraphEncoder enc;
    enc.config_ = config;
    enc.featurizer_ = {config.featurizer_seed, config.feature_dim};
    auto rng = nn::seeded_rng(seed, 0x67e7u);
    Eigen::Index in = config.feature_dim;
    for (int i = 0; i < config.num_layers; ++i) {
        enc.layers_.push_back(
            GineLayer::create(enc.params_, "gine" + std::to_string(i), in, config.hidden_dim, rng));
        in = config.hidden_dim;
    }
    enc.readout_ = nn::Linear::create(enc.params_, "readout", in, config.d_g, rng);
    return enc;
}

Tensor GraphEncoder::encode(const GraphView& view) const {
    if (view.x.rows() == 0) throw EmptyGraphError("cannot encode a graph without nodes");
    if (view.x.cols() != config_.feature_dim) throw ShapeError("graph view has the wrong feature width");
    Tensor h = ag::constant(view.x);
    const Tensor e = ag::constant(view.e);
    for (const auto& layer : layers_) h = gine_conv(layer, h, view.edges, e);
    return readout_(ag::mean_rows(h));
}

RowVector GraphEncoder::encode_graph(const netlist::DataPathGraph& g) const {
    if (g.nodes.empty()) throw EmptyGraphError("graph '" + g.module_name + "' has no nodes");
    ag::NoGradGuard guard;
    return encode(make_view(g, featurizer_)).value();
}

Checkpoint GraphEncoder::to_checkpoint(std::vector<double> loss_trace) const {
    Checkpoint c;
    c.kind = "graph_encoder";
    c.config = config_.to_json();
    c.parameters = params_.to_json();
    c.loss_trace = std::move(loss_trace);
    return c;
}

GraphEncoder GraphEncoder::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "graph_encoder") throw SchemaError("expected a graph_encoder checkpoint, got " + ckpt.kind);
    GraphEncoder enc = create(GraphEncoderConfig::from_json(ckpt.config), 0);
    enc.params_.load_json(ckpt.parameters);
    return enc;
}

namespace {

GraphView augment_view(const GraphView& base, const AugmentationPolicy& policy, std::uint64_t draw) {
    auto rng = nn::seeded_rng(policy.seed, draw);
    GraphView v;
    v.x = base.x;
    std::vector<std::size_t> kept;
    std::bernoulli_distribution drop(policy.edge_drop_prob);
    for (std::size_t i = 0; i < base.edges.size(); ++i) {
        if (!drop(rng)) kept.push_back(i);
    }
    if (kept.empty() && !base.edges.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, base.edges.size() - 1);
        kept.push_back(pick(rng));
    }
    v.e.resize(static_cast<Eigen::Index>(kept.size()), base.e.cols());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        v.edges.push_back(base.edges[kept[k]]);
        v.e.row(static_cast<Eigen::Index>(k)) = base.e.row(static_cast<Eigen::Index>(kept[k]));
    }
    if (policy.feature_noise_sigma > 0) {
        std::normal_distribution<double> noise(0.0, policy.feature_noise_sigma);
        for (Eigen::Index i = 0; i < v.x.size(); ++i) v.x.data()[i] += noise(rng);
    }
    return v;
}

void check_policy(const AugmentationPolicy& p) {
    if (!(p.edge_drop_prob >= 0.0 && p.edge_drop_prob < 1.0)) throw ConfigError("edge_drop_prob must lie in [0, 1)");
    if (!(p.feature_noise_sigma >= 0.0)) throw ConfigError("feature_noise_sigma must be non-negative");
}

}  // namespace

GraphView augment(const netlist::DataPathGraph& g, const AugmentationPolicy& policy, std::uint64_t draw,
                  const NodeFeaturizer& featurizer) {
    check_policy(policy);
    if (g.nodes.empty()) throw EmptyGraphError("cannot augment a graph without nodes");
    return augment_view(make_view(g, featurizer), policy, draw);
}

nlohmann::ordered_json EncoderTrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"min_lr", min_lr},
            {"warmup_ratio", warmup_ratio},
            {"weight_decay", weight_decay},
            {"tau", tau},
            {"edge_drop_prob", augmentation.edge_drop_prob},
            {"feature_noise_sigma", augmentation.feature_noise_sigma},
            {"augmentation_seed", augmentation.seed},
            {"seed", seed}};
}

EncoderTrainConfig EncoderTrainConfig::from_json(const nlohmann::json& j) {
    EncoderTrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.tau = j.value("tau", c.tau);
    c.augmentation.edge_drop_prob = j.value("edge_drop_prob", c.augmentation.edge_drop_prob);
    c.augmentation.feature_noise_sigma = j.value("feature_noise_sigma", c.augmentation.feature_noise_sigma);
    c.augmentation.seed = j.value("augmentation_seed", c.augmentation.seed);
    c.seed = j.value("seed", c.seed);
    return c;
}

EncoderTrainResult train_encoder(const std::vector<netlist::DataPathGraph>& corpus, const GraphEncoderConfig& model,
                                 const EncoderTrainConfig& cfg) {
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (corpus.size() < static_cast<std::size_t>(cfg.batch_size)) {
        throw ConfigError("corpus of " + std::to_string(corpus.size()) + " graphs cannot fill a batch of " +
                          std::to_string(cfg.batch_size));
    }
    if (cfg.epochs < 1 || !(cfg.lr > 0) || !(cfg.tau > 0) || cfg.min_lr < 0 || cfg.weight_decay < 0) {
        throw ConfigError("invalid encoder training hyperparameters");
    }
    check_policy(cfg.augmentation);

    EncoderTrainResult result{GraphEncoder::create(model, cfg.seed), {}};
    GraphEncoder& enc = result.encoder;
    std::vector<GraphView> base;
    base.reserve(corpus.size());
    for (const auto& g : corpus) {
        if (g.nodes.empty()) throw EmptyGraphError("graph '" + g.module_name + "' has no nodes");
        base.push_back(make_view(g, enc.featurizer()));
    }

    const std::size_t n = corpus.size();
    const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::pair<std::size_t, std::size_t>> batches;  // [begin, end) into the permutation
    for (std::size_t s = 0; s < n; s += b) {
        const std::size_t e = std::min(n, s + b);
        if (e - s >= 2) batches.emplace_back(s, e);
    }
    nn::AdamW opt(enc.params().tensors(), {.weight_decay = cfg.weight_decay});
    const nn::CosineSchedule sched{cfg.lr, cfg.min_lr, cfg.warmup_ratio,
                                   static_cast<long>(cfg.epochs) * static_cast<long>(batches.size())};
    auto rng = nn::seeded_rng(cfg.seed, 0x5407u);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double total = 0.0;
        for (const auto& [s, e] : batches) {
            std::vector<Tensor> z1, z2;
            for (std::size_t k = s; k < e; ++k) {
                const std::size_t gi = perm[k];
                const std::uint64_t draw = (static_cast<std::uint64_t>(epoch) * n + gi) * 2;
                z1.push_back(enc.encode(augment_view(base[gi], cfg.augmentation, draw)));
                z2.push_back(enc.encode(augment_view(base[gi], cfg.augmentation, draw + 1)));
            }
            Tensor loss = contrastive::info_nce(ag::concat_rows(z1), ag::concat_rows(z2), cfg.tau);
            opt.zero_grad();
            ag::backward(loss);
            opt.step(sched.at(step++));
            total += loss.item();
        }
        result.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    }
    return result;
}

double view_retrieval_recall(const GraphEncoder& enc, const std::vector<netlist::DataPathGraph>& corpus,
                             const AugmentationPolicy& policy, std::uint64_t draw_base) {
    if (corpus.empty()) return 0.0;
    ag::NoGradGuard guard;
    const auto n = static_cast<Eigen::Index>(corpus.size());
    Matrix a(n, enc.config().d_g), b(n, enc.config().d_g);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& g = corpus[static_cast<std::size_t>(i)];
        const std::uint64_t draw = draw_base + 2 * static_cast<std::uint64_t>(i);
        a.row(i) = enc.encode(augment(g, policy, draw, enc.featurizer())).value();
        b.row(i) = enc.encode(augment(g, policy, draw + 1, enc.featurizer())).value();
    }
    a.rowwise().normalize();
    b.rowwise().normalize();
    const Matrix sim = a * b.transpose();
    int hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        sim.row(i).maxCoeff(&best);
        hits += best == i ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

constexpr char kEmbeddingMagic[8] = {'V', 'G', 'E', 'M', 'B', '1', '\0', '\0'};

std::filesystem::path ids_path(const std::filesystem::path& p) { return p.string() + ".ids.json"; }

}  // namespace

void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids, const Matrix& rows) {
    if (static_cast<Eigen::Index>(ids.size()) != rows.rows()) throw ShapeError("one id per embedding row");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const std::uint64_t shape[2] = {static_cast<std::uint64_t>(rows.rows()), static_cast<std::uint64_t>(rows.cols())};
    out.write(kEmbeddingMagic, sizeof(kEmbeddingMagic));
    out.write(reinterpret_cast<const char*>(shape), sizeof(shape));
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
        const float f = static_cast<float>(rows.data()[i]);
        out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
    if (!out) throw IoError("short write to " + path.string());
    write_text_file(ids_path(path), nlohmann::json(ids).dump() + "\n");
}

std::pair<std::vector<std::string>, Matrix> read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    std::uint64_t shape[2];
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(shape), sizeof(shape));
    if (!in || std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) != 0) {
        throw SchemaError(path.string() + " is not an embedding file");
    }
    Matrix m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    std::vector<float> buf(static_cast<std::size_t>(m.size()));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw SchemaError(path.string() + " is truncated");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = buf[static_cast<std::size_t>(i)];
    std::vector<std::string> ids;
    try {
        ids = nlohmann::json::parse(read_text_file(ids_path(path))).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("bad id sidecar for " + path.string() + ": " + e.what());
    }
    if (static_cast<Eigen::Index>(ids.size()) != m.rows()) throw SchemaError("id sidecar length mismatch");
    return {std::move(ids), std::move(m)};
}

}  // namespace verigrag::gnn
