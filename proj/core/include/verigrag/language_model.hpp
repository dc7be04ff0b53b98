#pragma once

// Tiny decoder-only language model used as the frozen generator. Everything
// downstream touches it through the embedding-level interface: embed tokens,
// run from input embeddings, sample with a temperature.

#include "verigrag/checkpoint.hpp"
#include "verigrag/nn.hpp"
#include "verigrag/text.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace verigrag::lm {

using ag::Tensor;

struct LmConfig {
    int d_llm = 64;
    int heads = 4;
    int layers = 2;
    int ffn_hidden = 128;
    int max_len = 192;

    nlohmann::ordered_json to_json() const;
    static LmConfig from_json(const nlohmann::json& j);
};

/// One training or prompting example: a description and the code it describes.
struct Example {
    std::string description;
    std::string code;
};

class TinyLm {
public:
    static TinyLm create(text::Vocabulary vocab, const LmConfig& cfg, std::uint64_t seed);
    /// Vocabulary over word tokens of every description and code tokens of every code.
    static text::Vocabulary build_vocabulary(const std::vector<Example>& examples);

    std::vector<int> encode_description(const std::string& description) const;
    std::vector<int> encode_code(const std::string& code) const;
    std::string decode_code(const std::vector<int>& ids) const;

    /// Token embeddings without positions (L x d_llm).
    Tensor embed(std::span<const int> ids) const;
    /// Adds positions, runs causal blocks and the output head: (L x d_llm) -> (L x vocab).
    Tensor forward_embeddings(const Tensor& inputs) const;

    /// Mean next-token cross-entropy over the code tokens and the closing eos of
    /// [prefix][bos description sep code eos]. `prefix` may be undefined.
    Tensor sequence_loss(const Tensor& prefix, std::span<const int> description, std::span<const int> code) const;

    /// Samples code ids after [prefix][bos description sep]; greedy when temperature is 0.
    /// Stops at eos, at `max_new` tokens or at max_len.
    std::vector<int> sample(const Matrix* prefix, std::span<const int> description, double temperature,
                            std::mt19937_64& rng, int max_new = 96) const;

    const LmConfig& config() const noexcept { return cfg_; }
    const text::Vocabulary& vocab() const noexcept { return vocab_; }
    nn::ParameterSet& params() noexcept { return params_; }
    const nn::ParameterSet& params() const noexcept { return params_; }

    Checkpoint to_checkpoint(std::vector<double> loss_trace = {}) const;
    static TinyLm from_checkpoint(const Checkpoint& ckpt);

private:
    Tensor prompt_embeddings(const Tensor& prefix, std::span<const int> description) const;

    LmConfig cfg_;
    text::Vocabulary vocab_;
    nn::ParameterSet params_;
    nn::Embedding tokens_;
    nn::Embedding positions_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm final_norm_;
    nn::Linear head_;
};

struct LmTrainConfig {
    int epochs = 40;
    int batch_size = 8;
    double lr = 3e-3;
    double min_lr = 1e-4;
    double warmup_ratio = 0.03;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static LmTrainConfig from_json(const nlohmann::json& j);
};

struct LmTrainResult {
    TinyLm lm;
    std::vector<double> epoch_loss;
};

/// Plain next-token pretraining without any prefix.
LmTrainResult train_lm(const std::vector<Example>& examples, const LmConfig& model, const LmTrainConfig& cfg);

/// Draws an index from softmax(logits / temperature); argmax (lowest index on ties) at 0.
int sample_index(const RowVector& logits, double temperature, std::mt19937_64& rng);

}  // namespace verigrag::lm
