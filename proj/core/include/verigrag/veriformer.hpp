#pragma once

// Query-token transformer that reads graph embeddings and turns them into soft
// prompts for the frozen language model.
//
// Layout of a joint pass: rows [0, Q) are query tokens, rows [Q, Q + L) are
// code tokens. Self-attention weights are shared by both row groups; the
// attention mask decides who may see whom. Cross-attention to the graph token
// sequence is applied to query rows only.

#include "verigrag/checkpoint.hpp"
#include "verigrag/language_model.hpp"
#include "verigrag/nn.hpp"
#include "verigrag/text.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace verigrag::vf {

using ag::Tensor;

struct VeriFormerConfig {
    int queries = 8;
    int d_v = 64;
    int heads = 4;
    int layers = 2;
    int ffn_hidden = 128;
    int graph_tokens = 8;
    int d_g = 128;
    int max_code_len = 128;  // including bos and eos

    nlohmann::ordered_json to_json() const;
    static VeriFormerConfig from_json(const nlohmann::json& j);
};

enum class MaskMode {
    unimodal,           // queries see queries, code sees code
    bidirectional,      // everything sees everything
    multimodal_causal,  // queries see queries; code sees all queries and earlier code
};

/// Additive (Q+L) x (Q+L) mask. `code_pad[t]` blocks code column t for every row.
Matrix attention_mask(MaskMode mode, Eigen::Index queries, Eigen::Index code_len,
                      const std::vector<bool>* code_pad = nullptr);

struct CoreBlock {
    nn::LayerNorm ln_self;
    nn::MultiHeadAttention self_attn;  // shared by query and code rows
    nn::LayerNorm ln_cross;
    nn::MultiHeadAttention cross;  // query rows only
    nn::LayerNorm ln_ffn_query;
    nn::Mlp ffn_query;
    std::optional<nn::LayerNorm> ln_ffn_code;
    std::optional<nn::Mlp> ffn_code;
};

class VeriFormer {
public:
    /// Without the code side only the graph pass is available (the stage-2 shape).
    static VeriFormer create(const VeriFormerConfig& cfg, text::Vocabulary code_vocab, std::uint64_t seed,
                             bool with_code_side = true);

    /// [bos] code tokens [eos], truncated to max_code_len. Throws EmptyCodeError.
    std::vector<int> encode_code(const std::string& code) const;

    /// 1 x d_g embedding -> graph_tokens x d_v.
    Tensor graph_token_sequence(const Tensor& g_emb) const;
    /// Query outputs (Q x d_v): the queries attend to each other and cross-attend to the graph tokens.
    Tensor forward_graph(const Tensor& g_tokens) const;
    /// Token plus position embeddings of code ids (L x d_v).
    Tensor code_embeddings(std::span<const int> ids) const;
    /// Mean of the non-pad code outputs under the unimodal mask (1 x d_v). Id 0 is padding.
    Tensor forward_code(std::span<const int> ids) const;
    /// Joint pass over [queries; code]; `g_tokens` may be null to skip cross-attention.
    Tensor forward_joint(const Tensor* g_tokens, const Tensor& code_emb, MaskMode mode,
                         const std::vector<bool>* code_pad = nullptr) const;

    /// Per-query matching logits (Q x 1) under the bidirectional mask.
    Tensor matching_logits(const Tensor& g_tokens, std::span<const int> code_ids) const;
    /// Mean of matching_logits (1 x 1).
    Tensor matching_score(const Tensor& g_tokens, std::span<const int> code_ids) const;

    /// Next-token cross-entropy at every code position but the last ((L-1) x 1),
    /// under the multimodal causal mask.
    Tensor generation_position_losses(const Tensor& g_tokens, const Tensor& code_emb,
                                      std::span<const int> code_ids) const;

    bool has_code_side() const noexcept { return code_side_; }
    const VeriFormerConfig& config() const noexcept { return cfg_; }
    const text::Vocabulary& code_vocab() const noexcept { return vocab_; }
    const std::vector<CoreBlock>& blocks() const noexcept { return blocks_; }
    const Tensor& query_bank() const noexcept { return bank_; }
    const nn::Linear& expansion() const noexcept { return expand_; }
    const nn::Linear& lm_head() const;
    const nn::Linear& match_head() const;

    /// Bank, expansion, shared self-attention, cross-attention and query feed-forward.
    nn::ParameterSet& graph_params() noexcept { return graph_params_; }
    const nn::ParameterSet& graph_params() const noexcept { return graph_params_; }
    /// Code embeddings, code feed-forward and the two stage-1 heads.
    nn::ParameterSet& code_params() noexcept { return code_params_; }
    const nn::ParameterSet& code_params() const noexcept { return code_params_; }
    std::vector<Tensor> all_tensors() const;

    Checkpoint to_checkpoint(std::vector<double> loss_trace = {}) const;  // kind veriformer_stage1
    static VeriFormer from_checkpoint(const Checkpoint& ckpt);

private:
    void check_code_side(const char* what) const;

    VeriFormerConfig cfg_;
    text::Vocabulary vocab_;
    bool code_side_ = true;
    nn::ParameterSet graph_params_;
    nn::ParameterSet code_params_;
    Tensor bank_;  // queries x d_v
    nn::Linear expand_;
    std::vector<CoreBlock> blocks_;
    nn::LayerNorm final_norm_;
    nn::Embedding code_tokens_;
    nn::Embedding code_positions_;
    nn::Linear lm_head_;
    nn::Linear match_head_;
};

/// max over query rows of cosine(query row, c): (Q x d), (1 x d) -> 1 x 1.
Tensor alignment_score(const Tensor& query_outputs, const Tensor& code_vec);
/// S_ij = alignment_score(graph i, code j) for B graphs and a B x d code matrix.
Tensor alignment_matrix(const std::vector<Tensor>& query_outputs, const Tensor& code_vecs);
/// Symmetric InfoNCE over alignment_matrix. Throws DomainError for tau <= 0,
/// DegenerateBatch when B < 2.
Tensor gcc_loss(const std::vector<Tensor>& query_outputs, const Tensor& code_vecs, double tau);

struct MatchExample {
    Tensor g_tokens;
    std::vector<int> code_ids;
    double label = 0.0;  // 1 matched, 0 mismatched
};

/// Binary cross-entropy on matching scores. Throws DegenerateBatch when every label is equal.
Tensor gcm_loss(const VeriFormer& model, const std::vector<MatchExample>& batch);

/// For each row i of a B x B alignment matrix: the highest-scoring j != i and a uniform j != i.
std::vector<std::pair<int, int>> select_negatives(const Matrix& alignment, std::mt19937_64& rng);

/// Mean next-token cross-entropy over the code. Throws EmptyCodeError for fewer than 2 ids.
Tensor gcg_loss(const VeriFormer& model, const Tensor& g_tokens, std::span<const int> code_ids);

struct Stage1Pair {
    RowVector graph_embedding;
    std::string code;
};

struct Stage1Config {
    int epochs = 80;
    int batch_size = 16;
    double lr = 2e-3;
    double min_lr = 1e-5;
    double warmup_ratio = 0.03;
    double weight_decay = 0.0;
    double tau = 0.1;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static Stage1Config from_json(const nlohmann::json& j);
};

struct Stage1Result {
    VeriFormer model;
    std::vector<double> gcc;
    std::vector<double> gcm;
    std::vector<double> gcg;
    std::vector<double> total;
};

/// Unit-weighted sum of the three objectives per batch. Only reads the graph embeddings.
Stage1Result stage1_train(const std::vector<Stage1Pair>& pairs, const VeriFormerConfig& model,
                          const Stage1Config& cfg);

/// Accuracy of sign(matching score) over every aligned pair and, for each, its
/// hardest mismatched code by alignment score.
double matching_accuracy(const VeriFormer& model, const std::vector<Stage1Pair>& pairs);

/// Affine map d_v -> d_llm applied row-wise. Throws ShapeError on a width mismatch.
Tensor project_soft_prompt(const nn::Linear& projection, const Tensor& query_outputs);

enum class KlPairing {
    row_mean,  // one distribution per side from the row means
    per_row,   // row i of Z against row i of G; row counts must match
};

/// Softmax over the feature dimension of both sides, then mean over compared rows
/// of sum_j Z_j (ln Z_j - ln G_j). Throws ShapeError on a width mismatch.
Tensor kl_distribution_loss(const Tensor& z, const Tensor& g, KlPairing pairing = KlPairing::row_mean);

/// Graph-side core, query bank and projection: everything generation needs.
class SoftPromptModel {
public:
    /// Deep-copies the graph side of a stage-1 model and adds a fresh projection.
    static SoftPromptModel from_stage1(const VeriFormer& stage1, int d_llm, std::uint64_t seed);

    Tensor soft_prompt(const Tensor& g_emb) const;  // Q x d_llm
    Matrix soft_prompt(const RowVector& g_emb) const;

    const VeriFormer& core() const noexcept { return core_; }
    const nn::Linear& projection() const noexcept { return projection_; }
    int d_llm() const { return static_cast<int>(projection_.out_features()); }
    int d_g() const noexcept { return core_.config().d_g; }
    nn::ParameterSet& projection_params() noexcept { return projection_params_; }
    std::vector<Tensor> trainable(bool train_core) const;
    std::string fingerprint() const;

    Checkpoint to_checkpoint(std::vector<double> loss_trace = {}) const;  // kind veriformer_stage2
    static SoftPromptModel from_checkpoint(const Checkpoint& ckpt);

private:
    VeriFormer core_;
    nn::ParameterSet projection_params_;
    nn::Linear projection_;
};

struct Stage2Sample {
    std::string description;
    RowVector graph_embedding;
    std::string code;
};

struct Stage2Config {
    int epochs = 8;
    double lr = 1e-3;
    double min_lr = 1e-5;
    double warmup_ratio = 0.03;
    double weight_decay = 0.0;
    double alpha = 0.1;
    KlPairing pairing = KlPairing::row_mean;
    double validation_fraction = 0.2;
    int patience = 2;
    bool train_core = true;  // false trains only the bank and the projection
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static Stage2Config from_json(const nlohmann::json& j);
};

struct Stage2Loss {
    Tensor gen;
    Tensor dist;
    Tensor total;  // gen + alpha * dist
};

Stage2Loss stage2_loss(const SoftPromptModel& model, const lm::TinyLm& lm, const Stage2Sample& sample, double alpha,
                       KlPairing pairing = KlPairing::row_mean);

struct Stage2Result {
    SoftPromptModel model;
    std::vector<double> epoch_gen;
    std::vector<double> epoch_dist;
    std::vector<double> epoch_total;
    std::vector<double> validation_total;
    double initial_dist = 0.0;  // mean Loss_Dist over the training split before any step
    double final_dist = 0.0;    // same, for the returned parameters
    int best_epoch = -1;
    bool stopped_early = false;
};

/// Trains the soft-prompt path against the frozen LM with early stopping on a
/// held-out split; the returned parameters are those of the best validation epoch.
Stage2Result stage2_train(const std::vector<Stage2Sample>& samples, const VeriFormer& stage1, const lm::TinyLm& lm,
                          const Stage2Config& cfg);

}  // namespace verigrag::vf
