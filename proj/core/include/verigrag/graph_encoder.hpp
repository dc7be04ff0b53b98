#pragma once

// GINE message passing over data-path graphs, with contrastive pre-training.

#include "verigrag/checkpoint.hpp"
#include "verigrag/graph.hpp"
#include "verigrag/nn.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace verigrag::gnn {

using ag::Tensor;

/// Hashed, sign-bucketed bag of node-attribute tokens with unit L2 norm.
struct NodeFeaturizer {
    std::uint64_t seed = 0;
    int output_dim = 64;

    /// "kind=", "op=", "io=", "port=<op>.<name>" and "param=" tokens for one node.
    static std::vector<std::string> tokens(const netlist::GraphNode& node);
    RowVector featurize(const netlist::GraphNode& node) const;
    Matrix featurize_graph(const netlist::DataPathGraph& g) const;
};

/// Structure plus features, the unit the encoder consumes.
struct GraphView {
    Matrix x;                               // nodes x feature_dim
    std::vector<std::pair<int, int>> edges;  // (src, dst)
    Matrix e;                               // edges x 1, width_norm
};

GraphView make_view(const netlist::DataPathGraph& g, const NodeFeaturizer& featurizer);

struct GineLayer {
    Tensor epsilon;                      // 1x1, learnable
    std::optional<nn::Mlp> mlp;          // h_theta; empty means identity
    std::optional<nn::Linear> edge_proj;  // edge features to node dim; empty means identity

    static GineLayer create(nn::ParameterSet& params, const std::string& name, Eigen::Index in_dim,
                            Eigen::Index out_dim, std::mt19937_64& rng);
};

/// x'_i = h((1 + eps) x_i + sum over in-neighbors j of relu(x_j + edge_proj(e_ji))).
Tensor gine_conv(const GineLayer& layer, const Tensor& x, std::span<const std::pair<int, int>> edges,
                 const Tensor& e);

struct GraphEncoderConfig {
    int feature_dim = 64;
    int hidden_dim = 128;
    int num_layers = 3;
    int d_g = 128;
    std::uint64_t featurizer_seed = 0;

    nlohmann::ordered_json to_json() const;
    static GraphEncoderConfig from_json(const nlohmann::json& j);
};

class GraphEncoder {
public:
    static GraphEncoder create(const GraphEncoderConfig& config, std::uint64_t seed);

    /// 1 x d_g embedding of a view (records gradients when enabled).
    Tensor encode(const GraphView& view) const;
    /// Throws EmptyGraphError on a graph without nodes.
    RowVector encode_graph(const netlist::DataPathGraph& g) const;

    const GraphEncoderConfig& config() const noexcept { return config_; }
    const NodeFeaturizer& featurizer() const noexcept { return featurizer_; }
    nn::ParameterSet& params() noexcept { return params_; }
    const nn::ParameterSet& params() const noexcept { return params_; }
    std::vector<GineLayer>& layers() noexcept { return layers_; }
    nn::Linear& readout() noexcept { return readout_; }

    Checkpoint to_checkpoint(std::vector<double> loss_trace = {}) const;
    static GraphEncoder from_checkpoint(const Checkpoint& ckpt);

private:
    GraphEncoderConfig config_;
    NodeFeaturizer featurizer_;
    nn::ParameterSet params_;
    std::vector<GineLayer> layers_;
    nn::Linear readout_;
};

struct AugmentationPolicy {
    double edge_drop_prob = 0.15;
    double feature_noise_sigma = 0.05;
    std::uint64_t seed = 0;
};

/// Drops each edge with probability p (keeping at least one when there were
/// any) and adds Gaussian feature noise. Deterministic in (policy.seed, draw).
GraphView augment(const netlist::DataPathGraph& g, const AugmentationPolicy& policy, std::uint64_t draw,
                  const NodeFeaturizer& featurizer);

struct EncoderTrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double lr = 2e-3;
    double min_lr = 1e-5;
    double warmup_ratio = 0.03;
    double weight_decay = 0.0;
    double tau = 0.2;
    AugmentationPolicy augmentation;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static EncoderTrainConfig from_json(const nlohmann::json& j);
};

struct EncoderTrainResult {
    GraphEncoder encoder;
    std::vector<double> epoch_loss;
};

/// Throws ConfigError when the corpus cannot fill one batch of >= 2 graphs or a
/// hyperparameter is out of range.
EncoderTrainResult train_encoder(const std::vector<netlist::DataPathGraph>& corpus,
                                 const GraphEncoderConfig& model, const EncoderTrainConfig& cfg);

/// Fraction of graphs whose view-1 embedding has its own view-2 embedding as
/// cosine nearest neighbor among all view-2 embeddings.
double view_retrieval_recall(const GraphEncoder& enc, const std::vector<netlist::DataPathGraph>& corpus,
                             const AugmentationPolicy& policy, std::uint64_t draw_base);

/// Row-major float32 matrix with an id sidecar (<path>.ids.json).
void write_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids, const Matrix& rows);
std::pair<std::vector<std::string>, Matrix> read_embeddings(const std::filesystem::path& path);

}  // namespace verigrag::gnn
