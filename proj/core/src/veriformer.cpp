#include "verigrag/veriformer.hpp"

#include "verigrag/contrastive.hpp"
#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace verigrag::vf {

nlohmann::ordered_json VeriFormerConfig::to_json() const {
    return {{"queries", queries}, {"d_v", d_v},           {"heads", heads},
            {"layers", layers},   {"ffn_hidden", ffn_hidden}, {"graph_tokens", graph_tokens},
            {"d_g", d_g},         {"max_code_len", max_code_len}};
}

VeriFormerConfig VeriFormerConfig::from_json(const nlohmann::json& j) {
    VeriFormerConfig c;
    c.queries = j.value("queries", c.queries);
    c.d_v = j.value("d_v", c.d_v);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.graph_tokens = j.value("graph_tokens", c.graph_tokens);
    c.d_g = j.value("d_g", c.d_g);
    c.max_code_len = j.value("max_code_len", c.max_code_len);
    return c;
}

Matrix attention_mask(MaskMode mode, Eigen::Index queries, Eigen::Index code_len, const std::vector<bool>* code_pad) {
    if (code_pad && static_cast<Eigen::Index>(code_pad->size()) != code_len) {
        throw ShapeError("pad flags must cover every code position");
    }
    const Eigen::Index n = queries + code_len;
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            const bool rq = r < queries;
            const bool cq = c < queries;
            bool allowed = true;
            if (rq && !cq) {
                allowed = mode == MaskMode::bidirectional;
            } else if (!rq && cq) {
                allowed = mode != MaskMode::unimodal;
            } else if (!rq && !cq && mode == MaskMode::multimodal_causal) {
                allowed = c <= r;
            }
            if (!cq && code_pad && (*code_pad)[static_cast<std::size_t>(c - queries)]) allowed = false;
            if (!allowed) m(r, c) = nn::kMaskedOut;
        }
    }
    return m;
}

VeriFormer VeriFormer::create(const VeriFormerConfig& cfg, text::Vocabulary code_vocab, std::uint64_t seed,
                              bool with_code_side) {
    if (cfg.queries < 1 || cfg.d_v < 1 || cfg.heads < 1 || cfg.d_v % cfg.heads != 0 || cfg.layers < 0 ||
        cfg.ffn_hidden < 1 || cfg.graph_tokens < 1 || cfg.d_g < 1 || cfg.max_code_len < 2) {
        throw ConfigError("invalid VeriFormer configuration");
    }
    VeriFormer m;
    m.cfg_ = cfg;
    m.vocab_ = std::move(code_vocab);
    m.code_side_ = with_code_side;
    // Graph-side parameters come from their own stream so they do not depend on with_code_side.
    auto rng = nn::seeded_rng(seed, 0x7f0u);
    m.bank_ = m.graph_params_.add("bank", nn::normal_matrix(cfg.queries, cfg.d_v, 1.0, rng));
    m.expand_ = nn::Linear::create(m.graph_params_, "expand", cfg.d_g, Eigen::Index{cfg.graph_tokens} * cfg.d_v, rng);
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string p = "block" + std::to_string(i);
        CoreBlock b;
        b.ln_self = nn::LayerNorm::create(m.graph_params_, p + ".ln_self", cfg.d_v);
        b.self_attn = nn::MultiHeadAttention::create(m.graph_params_, p + ".self_attn", cfg.d_v, cfg.heads, rng);
        b.ln_cross = nn::LayerNorm::create(m.graph_params_, p + ".ln_cross", cfg.d_v);
        b.cross = nn::MultiHeadAttention::create(m.graph_params_, p + ".cross", cfg.d_v, cfg.heads, rng);
        b.ln_ffn_query = nn::LayerNorm::create(m.graph_params_, p + ".ln_ffn_query", cfg.d_v);
        b.ffn_query = nn::Mlp::create(m.graph_params_, p + ".ffn_query", cfg.d_v, cfg.ffn_hidden, cfg.d_v, rng, true);
        m.blocks_.push_back(std::move(b));
    }
    m.final_norm_ = nn::LayerNorm::create(m.graph_params_, "final_norm", cfg.d_v);
    if (with_code_side) {
        if (m.vocab_.size() <= text::Vocabulary::kSep + 1) throw ConfigError("code vocabulary has no ordinary tokens");
        auto crng = nn::seeded_rng(seed, 0x7f1u);
        for (int i = 0; i < cfg.layers; ++i) {
            const std::string p = "block" + std::to_string(i);
            auto& b = m.blocks_[static_cast<std::size_t>(i)];
            b.ln_ffn_code = nn::LayerNorm::create(m.code_params_, p + ".ln_ffn_code", cfg.d_v);
            b.ffn_code = nn::Mlp::create(m.code_params_, p + ".ffn_code", cfg.d_v, cfg.ffn_hidden, cfg.d_v, crng, true);
        }
        m.code_tokens_ = nn::Embedding::create(m.code_params_, "code_tokens", m.vocab_.size(), cfg.d_v, crng);
        m.code_positions_ = nn::Embedding::create(m.code_params_, "code_positions", cfg.max_code_len, cfg.d_v, crng);
        m.lm_head_ = nn::Linear::create(m.code_params_, "lm_head", cfg.d_v, m.vocab_.size(), crng);
        m.match_head_ = nn::Linear::create(m.code_params_, "match_head", cfg.d_v, 1, crng);
    }
    return m;
}

void VeriFormer::check_code_side(const char* what) const {
    if (!code_side_) throw ConfigError(std::string(what) + " needs the code transformer, which this model does not have");
}

const nn::Linear& VeriFormer::lm_head() const {
    check_code_side("lm_head");
    return lm_head_;
}

const nn::Linear& VeriFormer::match_head() const {
    check_code_side("match_head");
    return match_head_;
}

std::vector<Tensor> VeriFormer::all_tensors() const {
    auto out = graph_params_.tensors();
    const auto code = code_params_.tensors();
    out.insert(out.end(), code.begin(), code.end());
    return out;
}

std::vector<int> VeriFormer::encode_code(const std::string& code) const {
    const auto body = vocab_.encode(text::code_tokens(code));
    if (body.empty()) throw EmptyCodeError("code has no tokens");
    std::vector<int> ids;
    ids.push_back(text::Vocabulary::kBos);
    const std::size_t room = static_cast<std::size_t>(cfg_.max_code_len) - 2;
    ids.insert(ids.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(std::min(room, body.size())));
    ids.push_back(text::Vocabulary::kEos);
    return ids;
}

Tensor VeriFormer::graph_token_sequence(const Tensor& g_emb) const {
    if (g_emb.rows() != 1 || g_emb.cols() != cfg_.d_g) throw ShapeError("graph embedding must be 1 x d_g");
    return ag::reshape(expand_(g_emb), cfg_.graph_tokens, cfg_.d_v);
}

Tensor VeriFormer::forward_joint(const Tensor* g_tokens, const Tensor& code_emb, MaskMode mode,
                                 const std::vector<bool>* code_pad) const {
    const Eigen::Index q = cfg_.queries;
    const Eigen::Index l = code_emb.defined() ? code_emb.rows() : 0;
    if (l > 0) {
        check_code_side("a pass with code rows");
        if (code_emb.cols() != cfg_.d_v) throw ShapeError("code embeddings must be d_v wide");
    }
    if (g_tokens && g_tokens->cols() != cfg_.d_v) throw ShapeError("graph tokens must be d_v wide");
    const Matrix mask = attention_mask(mode, q, l, code_pad);
    Tensor h = l > 0 ? ag::concat_rows({bank_, code_emb}) : bank_;
    for (const auto& b : blocks_) {
        Tensor x = b.ln_self(h);
        h = ag::add(h, b.self_attn(x, x, &mask));
        Tensor hq = l > 0 ? ag::slice_rows(h, 0, q) : h;
        if (g_tokens) hq = ag::add(hq, b.cross(b.ln_cross(hq), *g_tokens));
        hq = ag::add(hq, b.ffn_query(b.ln_ffn_query(hq)));
        if (l > 0) {
            Tensor hc = ag::slice_rows(h, q, l);
            hc = ag::add(hc, (*b.ffn_code)((*b.ln_ffn_code)(hc)));
            h = ag::concat_rows({hq, hc});
        } else {
            h = hq;
        }
    }
    return final_norm_(h);
}

Tensor VeriFormer::forward_graph(const Tensor& g_tokens) const {
    if (g_tokens.rows() < 1) throw ShapeError("graph token sequence is empty");
    return forward_joint(&g_tokens, Tensor{}, MaskMode::unimodal);
}

Tensor VeriFormer::code_embeddings(std::span<const int> ids) const {
    check_code_side("code_embeddings");
    if (ids.empty()) throw EmptyCodeError("code has no tokens");
    if (static_cast<int>(ids.size()) > cfg_.max_code_len) throw ShapeError("code longer than max_code_len");
    for (int id : ids) {
        if (id < 0 || id >= vocab_.size()) throw ShapeError("code id outside the vocabulary");
    }
    std::vector<int> pos(ids.size());
    std::iota(pos.begin(), pos.end(), 0);
    return ag::add(code_tokens_(ids), code_positions_(pos));
}

Tensor VeriFormer::forward_code(std::span<const int> ids) const {
    std::vector<bool> pad(ids.size());
    std::vector<int> keep;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        pad[t] = ids[t] == text::Vocabulary::kPad;
        if (!pad[t]) keep.push_back(static_cast<int>(t) + cfg_.queries);
    }
    if (keep.empty()) throw EmptyCodeError("code has no non-pad tokens");
    // Under the unimodal mask the query rows never reach the code rows.
    Tensor out = forward_joint(nullptr, code_embeddings(ids), MaskMode::unimodal, &pad);
    return ag::mean_rows(ag::gather_rows(out, keep));
}

Tensor VeriFormer::matching_logits(const Tensor& g_tokens, std::span<const int> code_ids) const {
    check_code_side("matching_logits");
    Tensor out = forward_joint(&g_tokens, code_embeddings(code_ids), MaskMode::bidirectional);
    return match_head_(ag::slice_rows(out, 0, cfg_.queries));
}

Tensor VeriFormer::matching_score(const Tensor& g_tokens, std::span<const int> code_ids) const {
    return ag::mean(matching_logits(g_tokens, code_ids));
}

Tensor VeriFormer::generation_position_losses(const Tensor& g_tokens, const Tensor& code_emb,
                                              std::span<const int> code_ids) const {
    check_code_side("generation_position_losses");
    const auto l = static_cast<Eigen::Index>(code_ids.size());
    if (l < 2) throw EmptyCodeError("generation needs at least two code tokens");
    if (code_emb.rows() != l) throw ShapeError("one embedding row per code id");
    Tensor out = forward_joint(&g_tokens, code_emb, MaskMode::multimodal_causal);
    Tensor logits = lm_head_(ag::slice_rows(out, cfg_.queries, l - 1));
    return ag::cross_entropy_rows(logits, code_ids.subspan(1));
}

Checkpoint VeriFormer::to_checkpoint(std::vector<double> loss_trace) const {
    check_code_side("a stage-1 checkpoint");
    Checkpoint c;
    c.kind = "veriformer_stage1";
    c.config = cfg_.to_json();
    c.parameters["graph"] = graph_params_.to_json();
    c.parameters["code"] = code_params_.to_json();
    c.loss_trace = std::move(loss_trace);
    c.extra["code_vocabulary"] = vocab_.to_json();
    return c;
}

VeriFormer VeriFormer::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "veriformer_stage1") throw SchemaError("expected a veriformer_stage1 checkpoint, got " + ckpt.kind);
    if (!ckpt.extra.contains("code_vocabulary") || !ckpt.parameters.contains("graph") ||
        !ckpt.parameters.contains("code")) {
        throw SchemaError("veriformer_stage1 checkpoint is incomplete");
    }
    auto m = create(VeriFormerConfig::from_json(ckpt.config), text::Vocabulary::from_json(ckpt.extra.at("code_vocabulary")),
                    0, true);
    m.graph_params_.load_json(ckpt.parameters.at("graph"));
    m.code_params_.load_json(ckpt.parameters.at("code"));
    return m;
}

Tensor alignment_score(const Tensor& query_outputs, const Tensor& code_vec) {
    if (code_vec.rows() != 1 || code_vec.cols() != query_outputs.cols()) throw ShapeError("code vector must be 1 x d");
    return ag::max_rows(contrastive::cosine_matrix(query_outputs, code_vec));
}

Tensor alignment_matrix(const std::vector<Tensor>& query_outputs, const Tensor& code_vecs) {
    if (static_cast<Eigen::Index>(query_outputs.size()) != code_vecs.rows()) {
        throw ShapeError("one code vector per graph");
    }
    std::vector<Tensor> rows;
    rows.reserve(query_outputs.size());
    for (const auto& g : query_outputs) rows.push_back(ag::max_rows(contrastive::cosine_matrix(g, code_vecs)));
    return ag::concat_rows(rows);
}

Tensor gcc_loss(const std::vector<Tensor>& query_outputs, const Tensor& code_vecs, double tau) {
    if (!(tau > 0)) throw DomainError("tau must be positive");
    if (query_outputs.size() < 2) throw DegenerateBatch("graph-code contrast needs at least two pairs");
    return contrastive::symmetric_info_nce_from_similarity(alignment_matrix(query_outputs, code_vecs), tau);
}

Tensor gcm_loss(const VeriFormer& model, const std::vector<MatchExample>& batch) {
    if (batch.empty()) throw DegenerateBatch("empty matching batch");
    const bool all_same =
        std::all_of(batch.begin(), batch.end(), [&](const MatchExample& e) { return e.label == batch.front().label; });
    if (all_same) throw DegenerateBatch("matching batch needs both matched and mismatched pairs");
    std::vector<Tensor> scores;
    std::vector<double> labels;
    for (const auto& e : batch) {
        scores.push_back(model.matching_score(e.g_tokens, e.code_ids));
        labels.push_back(e.label);
    }
    return ag::bce_with_logits(ag::concat_rows(scores), labels);
}

std::vector<std::pair<int, int>> select_negatives(const Matrix& alignment, std::mt19937_64& rng) {
    const Eigen::Index b = alignment.rows();
    if (b < 2 || alignment.cols() != b) throw DegenerateBatch("negative selection needs a square batch of two or more");
    std::vector<std::pair<int, int>> out;
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::Index hard = -1;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j != i && (hard < 0 || alignment(i, j) > alignment(i, hard))) hard = j;
        }
        const auto r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(b - 1));
        out.emplace_back(static_cast<int>(hard), static_cast<int>(r < i ? r : r + 1));
    }
    return out;
}

Tensor gcg_loss(const VeriFormer& model, const Tensor& g_tokens, std::span<const int> code_ids) {
    if (code_ids.size() < 2) throw EmptyCodeError("generation needs at least two code tokens");
    return ag::mean(model.generation_position_losses(g_tokens, model.code_embeddings(code_ids), code_ids));
}

nlohmann::ordered_json Stage1Config::to_json() const {
    return {{"epochs", epochs},           {"batch_size", batch_size},     {"lr", lr},   {"min_lr", min_lr},
            {"warmup_ratio", warmup_ratio}, {"weight_decay", weight_decay}, {"tau", tau}, {"seed", seed}};
}

Stage1Config Stage1Config::from_json(const nlohmann::json& j) {
    Stage1Config c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.tau = j.value("tau", c.tau);
    c.seed = j.value("seed", c.seed);
    return c;
}

Stage1Result stage1_train(const std::vector<Stage1Pair>& pairs, const VeriFormerConfig& model,
                          const Stage1Config& cfg) {
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (pairs.size() < static_cast<std::size_t>(cfg.batch_size)) throw ConfigError("fewer pairs than one batch");
    if (cfg.epochs < 1 || !(cfg.lr > 0) || cfg.min_lr < 0 || !(cfg.tau > 0) || cfg.weight_decay < 0) {
        throw ConfigError("invalid stage-1 hyperparameters");
    }
    std::vector<std::vector<std::string>> streams;
    for (const auto& p : pairs) {
        if (p.graph_embedding.size() != model.d_g) throw ConfigError("graph embedding width does not match d_g");
        streams.push_back(text::code_tokens(p.code));
    }
    Stage1Result result{VeriFormer::create(model, text::Vocabulary::build(streams), cfg.seed), {}, {}, {}, {}};
    auto& vf = result.model;
    std::vector<std::vector<int>> ids;
    for (const auto& p : pairs) ids.push_back(vf.encode_code(p.code));

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < pairs.size(); s += bs) {
        const std::size_t e = std::min(pairs.size(), s + bs);
        if (e - s >= 2) batches.emplace_back(s, e);
    }
    nn::AdamW opt(vf.all_tensors(), {.weight_decay = cfg.weight_decay});
    const nn::CosineSchedule sched{cfg.lr, cfg.min_lr, cfg.warmup_ratio,
                                   static_cast<long>(cfg.epochs) * static_cast<long>(batches.size())};
    auto rng = nn::seeded_rng(cfg.seed, 0x7f51u);
    std::vector<std::size_t> perm(pairs.size());
    std::iota(perm.begin(), perm.end(), 0);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double sum_gcc = 0, sum_gcm = 0, sum_gcg = 0, sum_total = 0;
        for (const auto& [s, e] : batches) {
            std::vector<Tensor> g_tokens, queries, codes;
            for (std::size_t k = s; k < e; ++k) {
                g_tokens.push_back(vf.graph_token_sequence(ag::constant(pairs[perm[k]].graph_embedding)));
                queries.push_back(vf.forward_graph(g_tokens.back()));
                codes.push_back(vf.forward_code(ids[perm[k]]));
            }
            Tensor align = alignment_matrix(queries, ag::concat_rows(codes));
            Tensor l_gcc = contrastive::symmetric_info_nce_from_similarity(align, cfg.tau);

            std::vector<MatchExample> match;
            const auto negatives = select_negatives(align.value(), rng);
            for (std::size_t k = 0; k < negatives.size(); ++k) {
                const auto& own = ids[perm[s + k]];
                match.push_back({g_tokens[k], own, 1.0});
                match.push_back({g_tokens[k], ids[perm[s + static_cast<std::size_t>(negatives[k].first)]], 0.0});
                match.push_back({g_tokens[k], ids[perm[s + static_cast<std::size_t>(negatives[k].second)]], 0.0});
            }
            Tensor l_gcm = gcm_loss(vf, match);

            std::vector<Tensor> gen;
            for (std::size_t k = s; k < e; ++k) gen.push_back(gcg_loss(vf, g_tokens[k - s], ids[perm[k]]));
            Tensor l_gcg = ag::mean(ag::concat_rows(gen));

            Tensor total = ag::add(ag::add(l_gcc, l_gcm), l_gcg);
            opt.zero_grad();
            ag::backward(total);
            opt.step(sched.at(step++));
            sum_gcc += l_gcc.item();
            sum_gcm += l_gcm.item();
            sum_gcg += l_gcg.item();
            sum_total += total.item();
        }
        const double nb = static_cast<double>(batches.size());
        result.gcc.push_back(sum_gcc / nb);
        result.gcm.push_back(sum_gcm / nb);
        result.gcg.push_back(sum_gcg / nb);
        result.total.push_back(sum_total / nb);
    }
    return result;
}

double matching_accuracy(const VeriFormer& model, const std::vector<Stage1Pair>& pairs) {
    if (pairs.empty()) return 0.0;
    ag::NoGradGuard guard;
    std::vector<Tensor> g_tokens, queries, codes;
    std::vector<std::vector<int>> ids;
    for (const auto& p : pairs) {
        g_tokens.push_back(model.graph_token_sequence(ag::constant(p.graph_embedding)));
        queries.push_back(model.forward_graph(g_tokens.back()));
        ids.push_back(model.encode_code(p.code));
        codes.push_back(model.forward_code(ids.back()));
    }
    const Matrix align = alignment_matrix(queries, ag::concat_rows(codes)).value();
    int correct = 0, total = 0;
    const auto n = static_cast<Eigen::Index>(pairs.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        correct += model.matching_score(g_tokens[si], ids[si]).item() > 0 ? 1 : 0;
        ++total;
        if (n < 2) continue;
        Eigen::Index hard = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && (hard < 0 || align(i, j) > align(i, hard))) hard = j;
        }
        correct += model.matching_score(g_tokens[si], ids[static_cast<std::size_t>(hard)]).item() <= 0 ? 1 : 0;
        ++total;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

Tensor project_soft_prompt(const nn::Linear& projection, const Tensor& query_outputs) {
    if (query_outputs.cols() != projection.in_features()) throw ShapeError("query outputs must be d_v wide");
    return projection(query_outputs);
}

Tensor kl_distribution_loss(const Tensor& z, const Tensor& g, KlPairing pairing) {
    if (z.cols() != g.cols()) throw ShapeError("both sides need the same feature dimension");
    if (z.rows() < 1 || g.rows() < 1) throw ShapeError("both sides need at least one row");
    Tensor zz = z, gg = g;
    if (pairing == KlPairing::row_mean) {
        zz = ag::mean_rows(z);
        gg = ag::mean_rows(g);
    } else if (z.rows() != g.rows()) {
        throw ShapeError("per-row pairing needs equal row counts");
    }
    Tensor lz = ag::log_softmax_rows(zz);
    Tensor lg = ag::log_softmax_rows(gg);
    Tensor kl = ag::sum(ag::hadamard(ag::exp(lz), ag::sub(lz, lg)));
    return ag::scale(kl, 1.0 / static_cast<double>(zz.rows()));
}

SoftPromptModel SoftPromptModel::from_stage1(const VeriFormer& stage1, int d_llm, std::uint64_t seed) {
    if (d_llm < 1) throw ConfigError("d_llm must be positive");
    SoftPromptModel m;
    m.core_ = VeriFormer::create(stage1.config(), text::Vocabulary(), 0, false);
    m.core_.graph_params().load_json(stage1.graph_params().to_json());
    auto rng = nn::seeded_rng(seed, 0x5f0u);
    m.projection_ = nn::Linear::create(m.projection_params_, "projection", stage1.config().d_v, d_llm, rng);
    return m;
}

Tensor SoftPromptModel::soft_prompt(const Tensor& g_emb) const {
    return project_soft_prompt(projection_, core_.forward_graph(core_.graph_token_sequence(g_emb)));
}

Matrix SoftPromptModel::soft_prompt(const RowVector& g_emb) const {
    ag::NoGradGuard guard;
    return soft_prompt(ag::constant(g_emb)).value();
}

std::vector<Tensor> SoftPromptModel::trainable(bool train_core) const {
    std::vector<Tensor> out;
    if (train_core) {
        out = core_.graph_params().tensors();
    } else {
        out.push_back(core_.query_bank());
    }
    const auto proj = projection_params_.tensors();
    out.insert(out.end(), proj.begin(), proj.end());
    return out;
}

std::string SoftPromptModel::fingerprint() const {
    return sha256_hex(core_.graph_params().fingerprint() + projection_params_.fingerprint());
}

Checkpoint SoftPromptModel::to_checkpoint(std::vector<double> loss_trace) const {
    Checkpoint c;
    c.kind = "veriformer_stage2";
    c.config = core_.config().to_json();
    c.config["d_llm"] = d_llm();
    c.parameters["graph"] = core_.graph_params().to_json();
    c.parameters["projection"] = projection_params_.to_json();
    c.loss_trace = std::move(loss_trace);
    return c;
}

SoftPromptModel SoftPromptModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "veriformer_stage2") throw SchemaError("expected a veriformer_stage2 checkpoint, got " + ckpt.kind);
    if (!ckpt.config.contains("d_llm") || !ckpt.parameters.contains("graph") ||
        !ckpt.parameters.contains("projection")) {
        throw SchemaError("veriformer_stage2 checkpoint is incomplete");
    }
    SoftPromptModel m;
    const auto cfg = VeriFormerConfig::from_json(ckpt.config);
    m.core_ = VeriFormer::create(cfg, text::Vocabulary(), 0, false);
    m.core_.graph_params().load_json(ckpt.parameters.at("graph"));
    auto rng = nn::seeded_rng(0, 0x5f0u);
    m.projection_ =
        nn::Linear::create(m.projection_params_, "projection", cfg.d_v, ckpt.config.at("d_llm").get<int>(), rng);
    m.projection_params_.load_json(ckpt.parameters.at("projection"));
    return m;
}

nlohmann::ordered_json Stage2Config::to_json() const {
    return {{"epochs", epochs},
            {"lr", lr},
            {"min_lr", min_lr},
            {"warmup_ratio", warmup_ratio},
            {"weight_decay", weight_decay},
            {"alpha", alpha},
            {"pairing", pairing == KlPairing::row_mean ? "row_mean" : "per_row"},
            {"validation_fraction", validation_fraction},
            {"patience", patience},
            {"train_core", train_core},
            {"seed", seed}};
}

Stage2Config Stage2Config::from_json(const nlohmann::json& j) {
    Stage2Config c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.alpha = j.value("alpha", c.alpha);
    const std::string pairing = j.value("pairing", std::string("row_mean"));
    if (pairing != "row_mean" && pairing != "per_row") throw ConfigError("unknown KL pairing '" + pairing + "'");
    c.pairing = pairing == "row_mean" ? KlPairing::row_mean : KlPairing::per_row;
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.patience = j.value("patience", c.patience);
    c.train_core = j.value("train_core", c.train_core);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

struct EncodedSample {
    RowVector graph_embedding;
    std::vector<int> description;
    std::vector<int> code;
};

EncodedSample encode_sample(const lm::TinyLm& lm, const Stage2Sample& s) {
    EncodedSample e{s.graph_embedding, lm.encode_description(s.description), lm.encode_code(s.code)};
    if (e.description.empty()) throw EmptyQueryError("description has no tokens");
    if (e.code.empty()) throw EmptyCodeError("target code has no tokens");
    return e;
}

Stage2Loss encoded_loss(const SoftPromptModel& model, const lm::TinyLm& lm, const EncodedSample& s, double alpha,
                        KlPairing pairing) {
    Tensor prompt = model.soft_prompt(ag::constant(s.graph_embedding));
    Tensor gen = lm.sequence_loss(prompt, s.description, s.code);
    Tensor z;
    {
        ag::NoGradGuard guard;
        z = ag::constant(lm.embed(s.description).value());
    }
    Tensor dist = kl_distribution_loss(z, prompt, pairing);
    return {gen, dist, ag::add(gen, ag::scale(dist, alpha))};
}

/// Clears requires_grad on the LM parameters for the guard's lifetime; values are never written.
class FreezeGuard {
public:
    explicit FreezeGuard(std::vector<Tensor> tensors) : tensors_(std::move(tensors)) {
        for (auto& t : tensors_) {
            previous_.push_back(t.requires_grad());
            t.set_requires_grad(false);
        }
    }
    ~FreezeGuard() {
        for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].set_requires_grad(previous_[i]);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<Tensor> tensors_;
    std::vector<bool> previous_;
};

}  // namespace

Stage2Loss stage2_loss(const SoftPromptModel& model, const lm::TinyLm& lm, const Stage2Sample& sample, double alpha,
                       KlPairing pairing) {
    FreezeGuard freeze(lm.params().tensors());
    return encoded_loss(model, lm, encode_sample(lm, sample), alpha, pairing);
}

Stage2Result stage2_train(const std::vector<Stage2Sample>& samples, const VeriFormer& stage1, const lm::TinyLm& lm,
                          const Stage2Config& cfg) {
    if (samples.empty()) throw ConfigError("no stage-2 samples");
    if (cfg.epochs < 1 || !(cfg.lr > 0) || cfg.min_lr < 0 || !(cfg.alpha >= 0) || cfg.weight_decay < 0 ||
        !(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1) || cfg.patience < 1) {
        throw ConfigError("invalid stage-2 hyperparameters");
    }
    for (const auto& s : samples) {
        if (s.graph_embedding.size() != stage1.config().d_g) throw ConfigError("graph embedding width does not match d_g");
    }
    FreezeGuard freeze(lm.params().tensors());
    Stage2Result result{SoftPromptModel::from_stage1(stage1, lm.config().d_llm, cfg.seed), {}, {}, {}, {}, 0, 0, -1,
                        false};
    std::vector<EncodedSample> encoded;
    for (const auto& s : samples) encoded.push_back(encode_sample(lm, s));

    auto rng = nn::seeded_rng(cfg.seed, 0x5f2u);
    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(encoded.size())));
    if (n_val >= encoded.size()) n_val = encoded.size() - 1;
    std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    const std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());

    auto mean_over = [&](const std::vector<std::size_t>& idx, auto pick) {
        ag::NoGradGuard guard;
        double total = 0.0;
        for (auto i : idx) total += pick(encoded_loss(result.model, lm, encoded[i], cfg.alpha, cfg.pairing));
        return total / static_cast<double>(idx.size());
    };
    auto dist_of = [](const Stage2Loss& l) { return l.dist.item(); };
    auto total_of = [](const Stage2Loss& l) { return l.total.item(); };
    result.initial_dist = mean_over(train, dist_of);

    nn::AdamW opt(result.model.trainable(cfg.train_core), {.weight_decay = cfg.weight_decay});
    const nn::CosineSchedule sched{cfg.lr, cfg.min_lr, cfg.warmup_ratio,
                                   static_cast<long>(cfg.epochs) * static_cast<long>(train.size())};
    Checkpoint best = result.model.to_checkpoint();
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        double gen = 0, dist = 0, total = 0;
        for (auto i : train) {
            auto loss = encoded_loss(result.model, lm, encoded[i], cfg.alpha, cfg.pairing);
            opt.zero_grad();
            ag::backward(loss.total);
            opt.step(sched.at(step++));
            gen += loss.gen.item();
            dist += loss.dist.item();
            total += loss.total.item();
        }
        const double nt = static_cast<double>(train.size());
        result.epoch_gen.push_back(gen / nt);
        result.epoch_dist.push_back(dist / nt);
        result.epoch_total.push_back(total / nt);
        const double v = val.empty() ? result.epoch_total.back() : mean_over(val, total_of);
        result.validation_total.push_back(v);
        if (v < best_val) {
            best_val = v;
            best = result.model.to_checkpoint();
            result.best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience) {
            result.stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }
    best.loss_trace = result.epoch_total;
    result.model = SoftPromptModel::from_checkpoint(best);
    result.final_dist = mean_over(train, dist_of);
    return result;
}

}  // namespace verigrag::vf
