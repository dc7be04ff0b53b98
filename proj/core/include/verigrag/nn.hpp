#pragma once

// Layers, parameter bookkeeping and optimizers built on the autograd tape.

#include "verigrag/autograd.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace verigrag::nn {

using ag::Tensor;

/// Additive attention-mask value for blocked positions.
inline constexpr double kMaskedOut = -1e9;

/// Ordered, named collection of trainable tensors. Tensors are shared handles,
/// so loading values into the set updates the modules that hold them.
class ParameterSet {
public:
    Tensor add(const std::string& name, Matrix init);

    const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
    std::vector<Tensor> tensors() const;
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;
    const Tensor& at(const std::string& name) const;

    void set_requires_grad(bool on);
    void zero_grad();

    /// {"name": {"shape": [r, c], "data": [...]}} in insertion order.
    nlohmann::ordered_json to_json() const;
    /// Loads values by name; every parameter must be present with the same shape.
    void load_json(const nlohmann::json& params);
    /// SHA-256 over names, shapes and raw values; used for freeze checks.
    std::string fingerprint() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out

    static Linear create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out,
                         std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const;
    Eigen::Index in_features() const { return weight.rows(); }
    Eigen::Index out_features() const { return weight.cols(); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    static LayerNorm create(ParameterSet& params, const std::string& name, Eigen::Index dim);
    Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct Embedding {
    Tensor table;  // vocab x dim

    static Embedding create(ParameterSet& params, const std::string& name, Eigen::Index vocab, Eigen::Index dim,
                            std::mt19937_64& rng);
    Tensor operator()(std::span<const int> ids) const { return ag::gather_rows(table, ids); }
};

/// Two linear layers with a nonlinearity in between.
struct Mlp {
    Linear fc1;
    Linear fc2;
    bool use_gelu = false;

    static Mlp create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                      Eigen::Index out, std::mt19937_64& rng, bool use_gelu = false);
    Tensor operator()(const Tensor& x) const;
};

struct MultiHeadAttention {
    Linear q;
    Linear k;
    Linear v;
    Linear o;
    int heads = 1;

    static MultiHeadAttention create(ParameterSet& params, const std::string& name, Eigen::Index dim, int heads,
                                     std::mt19937_64& rng);
    /// `mask` is additive with shape (rows(query_in) x rows(kv_in)); may be null.
    Tensor operator()(const Tensor& query_in, const Tensor& kv_in, const Matrix* mask = nullptr) const;
};

/// Pre-LN self-attention block.
struct TransformerBlock {
    LayerNorm ln1;
    MultiHeadAttention attn;
    LayerNorm ln2;
    Mlp ffn;

    static TransformerBlock create(ParameterSet& params, const std::string& name, Eigen::Index dim, int heads,
                                   Eigen::Index ffn_hidden, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x, const Matrix* mask = nullptr) const;
};

Matrix causal_mask(Eigen::Index n);

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWOptions options = {});
    void step(double lr);
    void zero_grad();
    long steps() const noexcept { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    AdamWOptions opt_;
    long t_ = 0;
};

/// Linear warm-up followed by cosine decay to `min_lr`.
struct CosineSchedule {
    double base_lr = 1e-3;
    double min_lr = 0.0;
    double warmup_ratio = 0.03;
    long total_steps = 1;

    double at(long step) const;
};

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace verigrag::nn
