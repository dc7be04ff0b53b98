#pragma once

// Cross-modal retrieval from descriptions to graph embeddings: a
// cross-attention teacher, a dual-encoder student distilled from it, and an
// exact cosine index over the student's graph-side vectors.

#include "verigrag/checkpoint.hpp"
#include "verigrag/nn.hpp"
#include "verigrag/text.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace verigrag::retrieval {

using ag::Tensor;

struct RetrieverConfig {
    int vocab_buckets = 2048;
    int max_len = 48;
    int d_model = 64;
    int heads = 4;
    int text_layers = 2;
    int ffn_hidden = 128;
    int d_g = 128;
    int d_r = 128;
    int graph_hidden = 128;
    int graph_tokens = 8;  // teacher only: graph embedding expanded to this many tokens
    std::uint64_t tokenizer_seed = 0;

    nlohmann::ordered_json to_json() const;
    static RetrieverConfig from_json(const nlohmann::json& j);
    text::HashedTokenizer tokenizer() const;
};

/// Token + position embeddings, pre-LN transformer layers, mean pool, projection to d_r.
struct TextTower {
    nn::Embedding tokens;
    nn::Embedding positions;
    std::vector<nn::TransformerBlock> blocks;
    nn::LayerNorm final_norm;
    nn::Linear proj;

    static TextTower create(nn::ParameterSet& params, const std::string& name, const RetrieverConfig& cfg,
                            std::mt19937_64& rng);
    Tensor embed(std::span<const int> ids) const;
    /// (L x d_model) embedded sequence -> 1 x d_r.
    Tensor forward(const Tensor& embedded) const;
};

/// Layer norm then a two-layer perceptron, d_g -> d_r. Row-wise, so batches stack.
struct GraphTower {
    nn::LayerNorm norm;
    nn::Mlp mlp;

    static GraphTower create(nn::ParameterSet& params, const std::string& name, const RetrieverConfig& cfg,
                             std::mt19937_64& rng);
    Tensor operator()(const Tensor& g) const;
};

struct EncodedPair {
    Tensor q;  // 1 x d_r
    Tensor g;  // 1 x d_r
};

/// Teacher: one shared cross-attention layer in front of a text tower and a graph tower.
class CrossAttentionEncoder {
public:
    static CrossAttentionEncoder create(const RetrieverConfig& cfg, std::uint64_t seed);

    EncodedPair encode_ids(std::span<const int> ids, const Tensor& g_emb) const;
    /// Throws EmptyQueryError when the query has no tokens.
    std::pair<RowVector, RowVector> teacher_encode(const std::string& query, const RowVector& g_emb) const;
    /// Cosine between the two outputs of teacher_encode(query, g_emb).
    double score(const std::string& query, const RowVector& g_emb) const;

    const RetrieverConfig& config() const noexcept { return cfg_; }
    const text::HashedTokenizer& tokenizer() const noexcept { return tokenizer_; }
    nn::ParameterSet& params() noexcept { return params_; }
    const nn::ParameterSet& params() const noexcept { return params_; }

    Checkpoint to_checkpoint(std::vector<double> loss_trace = {}) const;
    static CrossAttentionEncoder from_checkpoint(const Checkpoint& ckpt);

private:
    RetrieverConfig cfg_;
    text::HashedTokenizer tokenizer_{2, 0, 1};
    nn::ParameterSet params_;
    TextTower text_;
    GraphTower graph_;
    nn::Linear expand_;    // d_g -> graph_tokens * d_model
    nn::Linear contract_;  // graph_tokens * d_model -> d_g
    nn::LayerNorm cross_norm_;
    nn::MultiHeadAttention cross_;
};

/// Student: independent text and graph towers; the graph side needs no query.
class DualEncoder {
public:
    static DualEncoder create(const RetrieverConfig& cfg, std::uint64_t seed);

    Tensor encode_text_ids(std::span<const int> ids) const;
    Tensor encode_graphs(const Tensor& g_embs) const;  // rows are graphs
    /// Throws EmptyQueryError when the query has no tokens.
    RowVector encode_query(const std::string& query) const;
    Matrix encode_graph_rows(const Matrix& g_embs) const;

    const RetrieverConfig& config() const noexcept { return cfg_; }
    const text::HashedTokenizer& tokenizer() const noexcept { return tokenizer_; }
    nn::ParameterSet& params() noexcept { return params_; }
    const nn::ParameterSet& params() const noexcept { return params_; }

    Checkpoint to_checkpoint(std::vector<double> loss_trace = {}) const;
    static DualEncoder from_checkpoint(const Checkpoint& ckpt);

private:
    RetrieverConfig cfg_;
    text::HashedTokenizer tokenizer_{2, 0, 1};
    nn::ParameterSet params_;
    TextTower text_;
    GraphTower graph_;
};

struct TrainPair {
    std::string description;
    RowVector graph_embedding;
};

struct RetrieverTrainConfig {
    int epochs = 15;
    int batch_size = 16;
    double lr = 5e-4;
    double min_lr = 0.0;
    double warmup_ratio = 0.03;
    double weight_decay = 0.0;
    double tau = 0.1;
    double mse_weight = 1.0;  // student only
    std::uint64_t seed = 0;

    static RetrieverTrainConfig teacher_defaults();  // 15 epochs
    static RetrieverTrainConfig student_defaults();  // 100 epochs

    nlohmann::ordered_json to_json() const;
    static RetrieverTrainConfig from_json(const nlohmann::json& j);
};

struct TeacherTrainResult {
    CrossAttentionEncoder teacher;
    std::vector<double> epoch_loss;
    std::vector<std::string> warnings;  // skipped degenerate batches
};

/// Each batch scores every (description i, graph j) combination through the
/// teacher and applies InfoNCE with the aligned pairs as positives.
TeacherTrainResult train_teacher(const std::vector<TrainPair>& pairs, const RetrieverConfig& model,
                                 const RetrieverTrainConfig& cfg);

struct StudentTrainResult {
    DualEncoder student;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_info_nce;
    double initial_mse = 0.0;  // MSE to the teacher before the first step
    double final_mse = 0.0;
    std::vector<std::string> warnings;
};

/// loss = info_nce(student q, student g) + mse_weight * (MSE(q, teacher q) + MSE(g, teacher g)),
/// with the teacher evaluated on each aligned pair. The teacher is only read.
StudentTrainResult distill_student(const std::vector<TrainPair>& pairs, const CrossAttentionEncoder& teacher,
                                   const RetrieverTrainConfig& cfg, std::uint64_t init_seed);

/// Mean over both sides of the per-element squared error to the teacher on aligned pairs.
double student_teacher_mse(const DualEncoder& student, const CrossAttentionEncoder& teacher,
                           const std::vector<TrainPair>& pairs);

/// Fraction of descriptions whose own graph ranks within the top k of all graphs.
double teacher_recall_at_k(const CrossAttentionEncoder& teacher, const std::vector<TrainPair>& pairs, int k);
double student_recall_at_k(const DualEncoder& student, const std::vector<TrainPair>& pairs, int k);

struct Hit {
    std::string id;
    double score = 0.0;
};

/// Contract for an approximate nearest-neighbour backend. Vectors are unit rows;
/// query returns at most k hits by descending cosine, ties by ascending id.
class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual void insert(const std::string& id, const RowVector& unit_vector) = 0;
    virtual std::vector<Hit> query(const RowVector& unit_query, int k) const = 0;
    virtual std::string tag() const = 0;
};

struct RetrievalIndex {
    int dim = 0;
    std::vector<std::string> ids;
    Matrix vectors;  // unit rows, one per id
    std::string backend = "exact";
    std::string student_checkpoint;  // informational

    std::size_t size() const noexcept { return ids.size(); }
};

/// Throws DuplicateIdError on a repeated id.
RetrievalIndex build_index(const std::vector<std::string>& ids, const Matrix& graph_embeddings,
                           const DualEncoder& student);

/// Exact top-min(k, size) by cosine, ties by ascending id. Throws EmptyQueryError
/// on an empty query and DomainError for k < 1.
std::vector<Hit> retrieve(const RetrievalIndex& index, const std::string& query, const DualEncoder& student, int k);
std::vector<Hit> search(const RetrievalIndex& index, const RowVector& query_vector, int k);

void save_index(const std::filesystem::path& path, const RetrievalIndex& index);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace verigrag::retrieval
