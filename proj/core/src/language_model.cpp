#include "verigrag/language_model.hpp"

#include "verigrag/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace verigrag::lm {

nlohmann::ordered_json LmConfig::to_json() const {
    return {{"d_llm", d_llm}, {"heads", heads}, {"layers", layers}, {"ffn_hidden", ffn_hidden}, {"max_len", max_len}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
    LmConfig c;
    c.d_llm = j.value("d_llm", c.d_llm);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.max_len = j.value("max_len", c.max_len);
    return c;
}

TinyLm TinyLm::create(text::Vocabulary vocab, const LmConfig& cfg, std::uint64_t seed) {
    if (cfg.d_llm < 1 || cfg.heads < 1 || cfg.d_llm % cfg.heads != 0 || cfg.layers < 0 || cfg.ffn_hidden < 1 ||
        cfg.max_len < 4) {
        throw ConfigError("invalid language model configuration");
    }
    TinyLm m;
    m.cfg_ = cfg;
    m.vocab_ = std::move(vocab);
    auto rng = nn::seeded_rng(seed, 0x11au);
    m.tokens_ = nn::Embedding::create(m.params_, "tokens", m.vocab_.size(), cfg.d_llm, rng);
    m.positions_ = nn::Embedding::create(m.params_, "positions", cfg.max_len, cfg.d_llm, rng);
    for (int i = 0; i < cfg.layers; ++i) {
        m.blocks_.push_back(
            nn::TransformerBlock::create(m.params_, "block" + std::to_string(i), cfg.d_llm, cfg.heads, cfg.ffn_hidden, rng));
    }
    m.final_norm_ = nn::LayerNorm::create(m.params_, "final_norm", cfg.d_llm);
    m.head_ = nn::Linear::create(m.params_, "head", cfg.d_llm, m.vocab_.size(), rng);
    return m;
}

text::Vocabulary TinyLm::build_vocabulary(const std::vector<Example>& examples) {
    std::vector<std::vector<std::string>> streams;
    for (const auto& e : examples) {
        streams.push_back(text::word_tokens(e.description));
        streams.push_back(text::code_tokens(e.code));
    }
    return text::Vocabulary::build(streams);
}

std::vector<int> TinyLm::encode_description(const std::string& description) const {
    return vocab_.encode(text::word_tokens(description));
}

std::vector<int> TinyLm::encode_code(const std::string& code) const { return vocab_.encode(text::code_tokens(code)); }

std::string TinyLm::decode_code(const std::vector<int>& ids) const {
    std::vector<std::string> toks;
    for (int id : ids) {
        if (id == text::Vocabulary::kEos) break;
        if (id <= text::Vocabulary::kSep) continue;
        toks.push_back(vocab_.token(id));
    }
    return text::detokenize_code(toks);
}

Tensor TinyLm::embed(std::span<const int> ids) const {
    for (int id : ids) {
        if (id < 0 || id >= vocab_.size()) throw ShapeError("token id outside the vocabulary");
    }
    return tokens_(ids);
}

Tensor TinyLm::forward_embeddings(const Tensor& inputs) const {
    const Eigen::Index n = inputs.rows();
    if (inputs.cols() != cfg_.d_llm) throw ShapeError("input embeddings must be d_llm wide");
    if (n < 1 || n > cfg_.max_len) throw ShapeError("sequence length outside [1, max_len]");
    std::vector<int> pos(static_cast<std::size_t>(n));
    std::iota(pos.begin(), pos.end(), 0);
    Tensor h = ag::add(inputs, positions_(pos));
    const Matrix mask = nn::causal_mask(n);
    for (const auto& b : blocks_) h = b(h, &mask);
    return head_(final_norm_(h));
}

Tensor TinyLm::prompt_embeddings(const Tensor& prefix, std::span<const int> description) const {
    std::vector<int> ids;
    ids.push_back(text::Vocabulary::kBos);
    ids.insert(ids.end(), description.begin(), description.end());
    ids.push_back(text::Vocabulary::kSep);
    Tensor body = embed(ids);
    if (!prefix.defined() || prefix.rows() == 0) return body;
    if (prefix.cols() != cfg_.d_llm) throw ShapeError("soft prompt width must equal d_llm");
    return ag::concat_rows({prefix, body});
}

Tensor TinyLm::sequence_loss(const Tensor& prefix, std::span<const int> description, std::span<const int> code) const {
    if (code.empty()) throw EmptyCodeError("target code has no tokens");
    Tensor prompt = prompt_embeddings(prefix, description);
    const Eigen::Index prompt_len = prompt.rows();
    Tensor inputs = ag::concat_rows({prompt, embed(code)});
    Tensor logits = forward_embeddings(inputs);
    // The sep row predicts the first code token; the last code row predicts eos.
    std::vector<int> targets(code.begin(), code.end());
    targets.push_back(text::Vocabulary::kEos);
    Tensor rows = ag::slice_rows(logits, prompt_len - 1, static_cast<Eigen::Index>(targets.size()));
    return ag::cross_entropy(rows, targets);
}

int sample_index(const RowVector& logits, double temperature, std::mt19937_64& rng) {
    if (logits.size() == 0) throw ShapeError("cannot sample from empty logits");
    if (!(temperature >= 0)) throw DomainError("temperature must be non-negative");
    if (temperature == 0.0) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < logits.size(); ++i) {
            if (logits(i) > logits(best)) best = i;
        }
        return static_cast<int>(best);
    }
    const RowVector scaled = logits / temperature;
    const double mx = scaled.maxCoeff();
    const RowVector p = (scaled.array() - mx).exp().matrix();
    const double total = p.sum();
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53 * total;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += p(i);
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
}

std::vector<int> TinyLm::sample(const Matrix* prefix, std::span<const int> description, double temperature,
                                std::mt19937_64& rng, int max_new) const {
    ag::NoGradGuard guard;
    Tensor prompt = prompt_embeddings(prefix ? ag::constant(*prefix) : Tensor{}, description);
    std::vector<int> out;
    Matrix seq = prompt.value();
    while (static_cast<int>(out.size()) < max_new && seq.rows() < cfg_.max_len) {
        const Matrix logits = forward_embeddings(ag::constant(seq)).value();
        const int next = sample_index(logits.row(logits.rows() - 1), temperature, rng);
        if (next == text::Vocabulary::kEos) break;
        out.push_back(next);
        seq.conservativeResize(seq.rows() + 1, Eigen::NoChange);
        seq.row(seq.rows() - 1) = tokens_.table.value().row(next);
    }
    return out;
}

Checkpoint TinyLm::to_checkpoint(std::vector<double> loss_trace) const {
    Checkpoint c;
    c.kind = "language_model";
    c.config = cfg_.to_json();
    c.parameters = params_.to_json();
    c.loss_trace = std::move(loss_trace);
    c.extra["vocabulary"] = vocab_.to_json();
    return c;
}

TinyLm TinyLm::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "language_model") throw SchemaError("expected a language_model checkpoint, got " + ckpt.kind);
    if (!ckpt.extra.contains("vocabulary")) throw SchemaError("language_model checkpoint has no vocabulary");
    auto m = create(text::Vocabulary::from_json(ckpt.extra.at("vocabulary")), LmConfig::from_json(ckpt.config), 0);
    m.params_.load_json(ckpt.parameters);
    return m;
}

nlohmann::ordered_json LmTrainConfig::to_json() const {
    return {{"epochs", epochs},           {"batch_size", batch_size},     {"lr", lr},  {"min_lr", min_lr},
            {"warmup_ratio", warmup_ratio}, {"weight_decay", weight_decay}, {"seed", seed}};
}

LmTrainConfig LmTrainConfig::from_json(const nlohmann::json& j) {
    LmTrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    return c;
}

LmTrainResult train_lm(const std::vector<Example>& examples, const LmConfig& model, const LmTrainConfig& cfg) {
    if (examples.empty()) throw ConfigError("no language model training examples");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0) || cfg.min_lr < 0) {
        throw ConfigError("invalid language model training hyperparameters");
    }
    LmTrainResult result{TinyLm::create(TinyLm::build_vocabulary(examples), model, cfg.seed), {}};
    auto& lm = result.lm;
    std::vector<std::vector<int>> desc, code;
    for (const auto& e : examples) {
        desc.push_back(lm.encode_description(e.description));
        code.push_back(lm.encode_code(e.code));
        if (code.back().empty()) throw EmptyCodeError("training example has no code tokens");
        if (static_cast<int>(desc.back().size() + code.back().size()) + 3 > model.max_len) {
            throw ConfigError("training example longer than max_len");
        }
    }
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t n_batches = (examples.size() + bs - 1) / bs;
    nn::AdamW opt(lm.params().tensors(), {.weight_decay = cfg.weight_decay});
    const nn::CosineSchedule sched{cfg.lr, cfg.min_lr, cfg.warmup_ratio,
                                   static_cast<long>(cfg.epochs) * static_cast<long>(n_batches)};
    auto rng = nn::seeded_rng(cfg.seed, 0x11b1u);
    std::vector<std::size_t> perm(examples.size());
    std::iota(perm.begin(), perm.end(), 0);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double total = 0.0;
        for (std::size_t s = 0; s < perm.size(); s += bs) {
            const std::size_t e = std::min(perm.size(), s + bs);
            std::vector<Tensor> losses;
            for (std::size_t k = s; k < e; ++k) losses.push_back(lm.sequence_loss(Tensor{}, desc[perm[k]], code[perm[k]]));
            Tensor loss = ag::scale(ag::sum(ag::concat_rows(losses)), 1.0 / static_cast<double>(losses.size()));
            opt.zero_grad();
            ag::backward(loss);
            opt.step(sched.at(step++));
            total += loss.item() * static_cast<double>(e - s);
        }
        result.epoch_loss.push_back(total / static_cast<double>(examples.size()));
    }
    return result;
}

}  // namespace verigrag::lm
