#include "verigrag/retriever.hpp"

#include "verigrag/contrastive.hpp"
#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace verigrag::retrieval {

nlohmann::ordered_json RetrieverConfig::to_json() const {
    return {{"vocab_buckets", vocab_buckets}, {"max_len", max_len},       {"d_model", d_model},
            {"heads", heads},                 {"text_layers", text_layers}, {"ffn_hidden", ffn_hidden},
            {"d_g", d_g},                     {"d_r", d_r},               {"graph_hidden", graph_hidden},
            {"graph_tokens", graph_tokens},   {"tokenizer_seed", tokenizer_seed}};
}

RetrieverConfig RetrieverConfig::from_json(const nlohmann::json& j) {
    RetrieverConfig c;
    c.vocab_buckets = j.value("vocab_buckets", c.vocab_buckets);
    c.max_len = j.value("max_len", c.max_len);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.text_layers = j.value("text_layers", c.text_layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.d_g = j.value("d_g", c.d_g);
    c.d_r = j.value("d_r", c.d_r);
    c.graph_hidden = j.value("graph_hidden", c.graph_hidden);
    c.graph_tokens = j.value("graph_tokens", c.graph_tokens);
    c.tokenizer_seed = j.value("tokenizer_seed", c.tokenizer_seed);
    return c;
}

text::HashedTokenizer RetrieverConfig::tokenizer() const {
    return text::HashedTokenizer(vocab_buckets, tokenizer_seed, max_len);
}

TextTower TextTower::create(nn::ParameterSet& params, const std::string& name, const RetrieverConfig& cfg,
                            std::mt19937_64& rng) {
    TextTower t;
    t.tokens = nn::Embedding::create(params, name + ".tokens", cfg.vocab_buckets, cfg.d_model, rng);
    t.positions = nn::Embedding::create(params, name + ".positions", cfg.max_len, cfg.d_model, rng);
    for (int i = 0; i < cfg.text_layers; ++i) {
        t.blocks.push_back(nn::TransformerBlock::create(params, name + ".block" + std::to_string(i), cfg.d_model,
                                                        cfg.heads, cfg.ffn_hidden, rng));
    }
    t.final_norm = nn::LayerNorm::create(params, name + ".final_norm", cfg.d_model);
    t.proj = nn::Linear::create(params, name + ".proj", cfg.d_model, cfg.d_r, rng);
    return t;
}

Tensor TextTower::embed(std::span<const int> ids) const {
    if (ids.empty()) throw EmptyQueryError("query has no tokens");
    if (static_cast<Eigen::Index>(ids.size()) > positions.table.rows()) throw ShapeError("query longer than max_len");
    std::vector<int> pos(ids.size());
    std::iota(pos.begin(), pos.end(), 0);
    return ag::add(tokens(ids), positions(pos));
}

Tensor TextTower::forward(const Tensor& embedded) const {
    Tensor h = embedded;
    for (const auto& b : blocks) h = b(h);
    return proj(ag::mean_rows(final_norm(h)));
}

GraphTower GraphTower::create(nn::ParameterSet& params, const std::string& name, const RetrieverConfig& cfg,
                              std::mt19937_64& rng) {
    GraphTower g;
    g.norm = nn::LayerNorm::create(params, name + ".norm", cfg.d_g);
    g.mlp = nn::Mlp::create(params, name + ".mlp", cfg.d_g, cfg.graph_hidden, cfg.d_r, rng);
    return g;
}

Tensor GraphTower::operator()(const Tensor& g) const { return mlp(norm(g)); }

namespace {

void check_config(const RetrieverConfig& c) {
    if (c.vocab_buckets < 2 || c.max_len < 1 || c.d_model < 1 || c.heads < 1 || c.d_model % c.heads != 0 ||
        c.text_layers < 0 || c.ffn_hidden < 1 || c.d_g < 1 || c.d_r < 1 || c.graph_hidden < 1 || c.graph_tokens < 1) {
        throw ConfigError("invalid retriever configuration");
    }
}

std::vector<int> tokenize_query(const text::HashedTokenizer& tok, const std::string& query) {
    auto ids = tok.encode(query);
    if (ids.empty()) throw EmptyQueryError("query has no tokens");
    return ids;
}

Tensor row_cosine(const Tensor& a, const Tensor& b) {
    return ag::sum(ag::hadamard(ag::normalize_rows(a), ag::normalize_rows(b)));
}

}  // namespace

CrossAttentionEncoder CrossAttentionEncoder::create(const RetrieverConfig& cfg, std::uint64_t seed) {
    check_config(cfg);
    CrossAttentionEncoder t;
    t.cfg_ = cfg;
    t.tokenizer_ = cfg.tokenizer();
    auto rng = nn::seeded_rng(seed, 0x7eacu);
    t.text_ = TextTower::create(t.params_, "text", cfg, rng);
    t.graph_ = GraphTower::create(t.params_, "graph", cfg, rng);
    t.expand_ = nn::Linear::create(t.params_, "expand", cfg.d_g, Eigen::Index{cfg.graph_tokens} * cfg.d_model, rng);
    t.contract_ = nn::Linear::create(t.params_, "contract", Eigen::Index{cfg.graph_tokens} * cfg.d_model, cfg.d_g, rng);
    t.cross_norm_ = nn::LayerNorm::create(t.params_, "cross_norm", cfg.d_model);
    t.cross_ = nn::MultiHeadAttention::create(t.params_, "cross", cfg.d_model, cfg.heads, rng);
    return t;
}

EncodedPair CrossAttentionEncoder::encode_ids(std::span<const int> ids, const Tensor& g_emb) const {
    if (g_emb.rows() != 1 || g_emb.cols() != cfg_.d_g) throw ShapeError("teacher expects a 1 x d_g graph embedding");
    Tensor e = text_.embed(ids);
    Tensor g_tokens = ag::reshape(expand_(g_emb), cfg_.graph_tokens, cfg_.d_model);
    Tensor en = cross_norm_(e);
    Tensor gn = cross_norm_(g_tokens);
    // The same attention weights serve both directions.
    Tensor text_side = ag::add(e, cross_(en, gn));
    Tensor graph_side = ag::add(g_tokens, cross_(gn, en));
    Tensor flat = ag::reshape(graph_side, 1, Eigen::Index{cfg_.graph_tokens} * cfg_.d_model);
    return {text_.forward(text_side), graph_(ag::add(g_emb, contract_(flat)))};
}

std::pair<RowVector, RowVector> CrossAttentionEncoder::teacher_encode(const std::string& query,
                                                                      const RowVector& g_emb) const {
    const auto ids = tokenize_query(tokenizer_, query);
    ag::NoGradGuard guard;
    const auto out = encode_ids(ids, ag::constant(g_emb));
    return {out.q.value(), out.g.value()};
}

double CrossAttentionEncoder::score(const std::string& query, const RowVector& g_emb) const {
    const auto [q, g] = teacher_encode(query, g_emb);
    const double denom = q.norm() * g.norm();
    if (denom == 0.0) throw DegenerateInput("teacher produced a zero vector");
    return q.dot(g) / denom;
}

Checkpoint CrossAttentionEncoder::to_checkpoint(std::vector<double> loss_trace) const {
    Checkpoint c;
    c.kind = "retriever_teacher";
    c.config = cfg_.to_json();
    c.parameters = params_.to_json();
    c.loss_trace = std::move(loss_trace);
    return c;
}

CrossAttentionEncoder CrossAttentionEncoder::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "retriever_teacher") throw SchemaError("expected a retriever_teacher checkpoint, got " + ckpt.kind);
    auto t = create(RetrieverConfig::from_json(ckpt.config), 0);
    t.params_.load_json(ckpt.parameters);
    return t;
}

DualEncoder DualEncoder::create(const RetrieverConfig& cfg, std::uint64_t seed) {
    check_config(cfg);
    DualEncoder s;
    s.cfg_ = cfg;
    s.tokenizer_ = cfg.tokenizer();
    auto rng = nn::seeded_rng(seed, 0x57dau);
    s.text_ = TextTower::create(s.params_, "text", cfg, rng);
    s.graph_ = GraphTower::create(s.params_, "graph", cfg, rng);
    return s;
}

Tensor DualEncoder::encode_text_ids(std::span<const int> ids) const { return text_.forward(text_.embed(ids)); }

Tensor DualEncoder::encode_graphs(const Tensor& g_embs) const {
    if (g_embs.cols() != cfg_.d_g) throw ShapeError("student expects d_g-wide graph embeddings");
    return graph_(g_embs);
}

RowVector DualEncoder::encode_query(const std::string& query) const {
    const auto ids = tokenize_query(tokenizer_, query);
    ag::NoGradGuard guard;
    return encode_text_ids(ids).value();
}

Matrix DualEncoder::encode_graph_rows(const Matrix& g_embs) const {
    if (g_embs.rows() == 0) return Matrix(0, cfg_.d_r);
    ag::NoGradGuard guard;
    return encode_graphs(ag::constant(g_embs)).value();
}

Checkpoint DualEncoder::to_checkpoint(std::vector<double> loss_trace) const {
    Checkpoint c;
    c.kind = "retriever_student";
    c.config = cfg_.to_json();
    c.parameters = params_.to_json();
    c.loss_trace = std::move(loss_trace);
    return c;
}

DualEncoder DualEncoder::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "retriever_student") throw SchemaError("expected a retriever_student checkpoint, got " + ckpt.kind);
    auto s = create(RetrieverConfig::from_json(ckpt.config), 0);
    s.params_.load_json(ckpt.parameters);
    return s;
}

RetrieverTrainConfig RetrieverTrainConfig::teacher_defaults() { return {}; }

RetrieverTrainConfig RetrieverTrainConfig::student_defaults() {
    RetrieverTrainConfig c;
    c.epochs = 100;
    return c;
}

nlohmann::ordered_json RetrieverTrainConfig::to_json() const {
    return {{"epochs", epochs},         {"batch_size", batch_size}, {"lr", lr},
            {"min_lr", min_lr},         {"warmup_ratio", warmup_ratio}, {"weight_decay", weight_decay},
            {"tau", tau},               {"mse_weight", mse_weight}, {"seed", seed}};
}

RetrieverTrainConfig RetrieverTrainConfig::from_json(const nlohmann::json& j) {
    RetrieverTrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.tau = j.value("tau", c.tau);
    c.mse_weight = j.value("mse_weight", c.mse_weight);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

void check_train(const std::vector<TrainPair>& pairs, const RetrieverTrainConfig& cfg, int d_g) {
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (pairs.size() < static_cast<std::size_t>(cfg.batch_size)) {
        throw ConfigError(std::to_string(pairs.size()) + " pairs cannot fill a batch of " +
                          std::to_string(cfg.batch_size));
    }
    if (cfg.epochs < 1 || !(cfg.lr > 0) || !(cfg.tau > 0) || cfg.min_lr < 0 || cfg.weight_decay < 0 ||
        !(cfg.mse_weight >= 0)) {
        throw ConfigError("invalid retriever training hyperparameters");
    }
    for (const auto& p : pairs) {
        if (p.graph_embedding.size() != d_g) throw ConfigError("graph embedding width does not match d_g");
    }
}

std::vector<std::pair<std::size_t, std::size_t>> make_batches(std::size_t n, std::size_t b) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 0; s < n; s += b) {
        const std::size_t e = std::min(n, s + b);
        if (e - s >= 2) out.emplace_back(s, e);
    }
    return out;
}

bool all_identical(const std::vector<TrainPair>& pairs, const std::vector<std::size_t>& perm, std::size_t s,
                   std::size_t e) {
    for (std::size_t k = s + 1; k < e; ++k) {
        const auto& a = pairs[perm[s]];
        const auto& b = pairs[perm[k]];
        if (a.description != b.description || a.graph_embedding != b.graph_embedding) return false;
    }
    return true;
}

double mean_or_nan(double total, int count) {
    return count ? total / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TeacherTrainResult train_teacher(const std::vector<TrainPair>& pairs, const RetrieverConfig& model,
                                 const RetrieverTrainConfig& cfg) {
    check_train(pairs, cfg, model.d_g);
    TeacherTrainResult result{CrossAttentionEncoder::create(model, cfg.seed), {}, {}};
    auto& teacher = result.teacher;
    std::vector<std::vector<int>> ids;
    for (const auto& p : pairs) ids.push_back(tokenize_query(teacher.tokenizer(), p.description));

    const auto batches = make_batches(pairs.size(), static_cast<std::size_t>(cfg.batch_size));
    nn::AdamW opt(teacher.params().tensors(), {.weight_decay = cfg.weight_decay});
    const nn::CosineSchedule sched{cfg.lr, cfg.min_lr, cfg.warmup_ratio,
                                   static_cast<long>(cfg.epochs) * static_cast<long>(batches.size())};
    auto rng = nn::seeded_rng(cfg.seed, 0x7ea1u);
    std::vector<std::size_t> perm(pairs.size());
    std::iota(perm.begin(), perm.end(), 0);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double total = 0.0;
        int counted = 0;
        for (const auto& [s, e] : batches) {
            const double lr = sched.at(step++);
            if (all_identical(pairs, perm, s, e)) {
                result.warnings.push_back("epoch " + std::to_string(epoch) +
                                          ": DegenerateInput: every pair in the batch is identical; skipped");
                continue;
            }
            try {
                std::vector<Tensor> graphs;
                for (std::size_t k = s; k < e; ++k) graphs.push_back(ag::constant(pairs[perm[k]].graph_embedding));
                std::vector<Tensor> rows;
                for (std::size_t i = s; i < e; ++i) {
                    std::vector<Tensor> cells;
                    for (std::size_t j = s; j < e; ++j) {
                        const auto out = teacher.encode_ids(ids[perm[i]], graphs[j - s]);
                        cells.push_back(row_cosine(out.q, out.g));
                    }
                    rows.push_back(ag::concat_cols(cells));
                }
                Tensor loss = contrastive::info_nce_from_similarity(ag::concat_rows(rows), cfg.tau);
                opt.zero_grad();
                ag::backward(loss);
                opt.step(lr);
                total += loss.item();
                ++counted;
            } catch (const DegenerateInput& ex) {
                result.warnings.push_back("epoch " + std::to_string(epoch) + ": DegenerateInput: " + ex.what());
            }
        }
        result.epoch_loss.push_back(mean_or_nan(total, counted));
    }
    return result;
}

namespace {

struct TeacherTargets {
    Matrix q;
    Matrix g;
};

TeacherTargets teacher_targets(const CrossAttentionEncoder& teacher, const std::vector<TrainPair>& pairs) {
    TeacherTargets t{Matrix(static_cast<Eigen::Index>(pairs.size()), teacher.config().d_r),
                     Matrix(static_cast<Eigen::Index>(pairs.size()), teacher.config().d_r)};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto [q, g] = teacher.teacher_encode(pairs[i].description, pairs[i].graph_embedding);
        t.q.row(static_cast<Eigen::Index>(i)) = q;
        t.g.row(static_cast<Eigen::Index>(i)) = g;
    }
    return t;
}

Matrix stack_embeddings(const std::vector<TrainPair>& pairs) {
    Matrix m(static_cast<Eigen::Index>(pairs.size()), pairs.empty() ? 0 : pairs[0].graph_embedding.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pairs[i].graph_embedding;
    return m;
}

Matrix student_queries(const DualEncoder& s, const std::vector<TrainPair>& pairs) {
    Matrix q(static_cast<Eigen::Index>(pairs.size()), s.config().d_r);
    for (std::size_t i = 0; i < pairs.size(); ++i) q.row(static_cast<Eigen::Index>(i)) = s.encode_query(pairs[i].description);
    return q;
}

double recall_from_scores(const Matrix& scores, int k) {
    if (k < 1) throw DomainError("k must be positive");
    const Eigen::Index n = scores.rows();
    if (n == 0) return 0.0;
    int hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double own = scores(i, i);
        Eigen::Index rank = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            if (scores(i, j) > own || (scores(i, j) == own && j < i)) ++rank;
        }
        hits += rank < k ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

Matrix cosine_rows(Matrix a, Matrix b) {
    a.rowwise().normalize();
    b.rowwise().normalize();
    return a * b.transpose();
}

}  // namespace

double student_teacher_mse(const DualEncoder& student, const CrossAttentionEncoder& teacher,
                           const std::vector<TrainPair>& pairs) {
    if (pairs.empty()) return 0.0;
    const auto t = teacher_targets(teacher, pairs);
    const Matrix sq = student_queries(student, pairs);
    const Matrix sg = student.encode_graph_rows(stack_embeddings(pairs));
    const double mq = (sq - t.q).squaredNorm() / static_cast<double>(sq.size());
    const double mg = (sg - t.g).squaredNorm() / static_cast<double>(sg.size());
    return 0.5 * (mq + mg);
}

StudentTrainResult distill_student(const std::vector<TrainPair>& pairs, const CrossAttentionEncoder& teacher,
                                   const RetrieverTrainConfig& cfg, std::uint64_t init_seed) {
    check_train(pairs, cfg, teacher.config().d_g);
    StudentTrainResult result{DualEncoder::create(teacher.config(), init_seed), {}, {}, 0.0, 0.0, {}};
    auto& student = result.student;
    const auto targets = teacher_targets(teacher, pairs);
    const Matrix graphs = stack_embeddings(pairs);
    std::vector<std::vector<int>> ids;
    for (const auto& p : pairs) ids.push_back(tokenize_query(student.tokenizer(), p.description));
    result.initial_mse = student_teacher_mse(student, teacher, pairs);

    const auto batches = make_batches(pairs.size(), static_cast<std::size_t>(cfg.batch_size));
    nn::AdamW opt(student.params().tensors(), {.weight_decay = cfg.weight_decay});
    const nn::CosineSchedule sched{cfg.lr, cfg.min_lr, cfg.warmup_ratio,
                                   static_cast<long>(cfg.epochs) * static_cast<long>(batches.size())};
    auto rng = nn::seeded_rng(cfg.seed, 0x57d1u);
    std::vector<std::size_t> perm(pairs.size());
    std::iota(perm.begin(), perm.end(), 0);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double total = 0.0, total_nce = 0.0;
        int counted = 0;
        for (const auto& [s, e] : batches) {
            const double lr = sched.at(step++);
            if (all_identical(pairs, perm, s, e)) {
                result.warnings.push_back("epoch " + std::to_string(epoch) +
                                          ": DegenerateInput: every pair in the batch is identical; skipped");
                continue;
            }
            const auto b = static_cast<Eigen::Index>(e - s);
            Matrix g_rows(b, graphs.cols()), tq(b, targets.q.cols()), tg(b, targets.g.cols());
            std::vector<Tensor> qs;
            for (std::size_t k = s; k < e; ++k) {
                const auto r = static_cast<Eigen::Index>(k - s);
                const auto src = static_cast<Eigen::Index>(perm[k]);
                g_rows.row(r) = graphs.row(src);
                tq.row(r) = targets.q.row(src);
                tg.row(r) = targets.g.row(src);
                qs.push_back(student.encode_text_ids(ids[perm[k]]));
            }
            try {
                Tensor sq = ag::concat_rows(qs);
                Tensor sg = student.encode_graphs(ag::constant(g_rows));
                Tensor nce = contrastive::info_nce(sq, sg, cfg.tau);
                Tensor distill = ag::add(ag::mse(sq, ag::constant(tq)), ag::mse(sg, ag::constant(tg)));
                Tensor loss = ag::add(nce, ag::scale(distill, cfg.mse_weight));
                opt.zero_grad();
                ag::backward(loss);
                opt.step(lr);
                total += loss.item();
                total_nce += nce.item();
                ++counted;
            } catch (const DegenerateInput& ex) {
                result.warnings.push_back("epoch " + std::to_string(epoch) + ": DegenerateInput: " + ex.what());
            }
        }
        result.epoch_loss.push_back(mean_or_nan(total, counted));
        result.epoch_info_nce.push_back(mean_or_nan(total_nce, counted));
    }
    result.final_mse = student_teacher_mse(student, teacher, pairs);
    return result;
}

double teacher_recall_at_k(const CrossAttentionEncoder& teacher, const std::vector<TrainPair>& pairs, int k) {
    const auto n = static_cast<Eigen::Index>(pairs.size());
    Matrix scores(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            scores(i, j) = teacher.score(pairs[static_cast<std::size_t>(i)].description,
                                         pairs[static_cast<std::size_t>(j)].graph_embedding);
        }
    }
    return recall_from_scores(scores, k);
}

double student_recall_at_k(const DualEncoder& student, const std::vector<TrainPair>& pairs, int k) {
    if (pairs.empty()) return 0.0;
    const Matrix q = student_queries(student, pairs);
    const Matrix g = student.encode_graph_rows(stack_embeddings(pairs));
    return recall_from_scores(cosine_rows(q, g), k);
}

RetrievalIndex build_index(const std::vector<std::string>& ids, const Matrix& graph_embeddings,
                           const DualEncoder& student) {
    if (static_cast<Eigen::Index>(ids.size()) != graph_embeddings.rows()) throw ShapeError("one id per embedding row");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) throw DuplicateIdError("duplicate index id '" + id + "'");
    }
    RetrievalIndex index;
    index.dim = student.config().d_r;
    index.ids = ids;
    index.vectors = student.encode_graph_rows(graph_embeddings);
    for (Eigen::Index i = 0; i < index.vectors.rows(); ++i) {
        const double norm = index.vectors.row(i).norm();
        if (norm == 0.0) throw DegenerateInput("graph '" + ids[static_cast<std::size_t>(i)] + "' maps to a zero vector");
        index.vectors.row(i) /= norm;
    }
    return index;
}

std::vector<Hit> search(const RetrievalIndex& index, const RowVector& query_vector, int k) {
    if (k < 1) throw DomainError("k must be at least 1");
    if (index.size() == 0) return {};
    if (query_vector.size() != index.vectors.cols()) throw ShapeError("query vector width does not match the index");
    const double norm = query_vector.norm();
    if (norm == 0.0) throw DegenerateInput("query maps to a zero vector");
    const Eigen::VectorXd scores = index.vectors * (query_vector / norm).transpose();
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(order.size(), static_cast<std::size_t>(k));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double sa = scores(static_cast<Eigen::Index>(a));
                          const double sb = scores(static_cast<Eigen::Index>(b));
                          if (sa != sb) return sa > sb;
                          return index.ids[a] < index.ids[b];
                      });
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < take; ++i) {
        hits.push_back({index.ids[order[i]], std::clamp(scores(static_cast<Eigen::Index>(order[i])), -1.0, 1.0)});
    }
    return hits;
}

std::vector<Hit> retrieve(const RetrievalIndex& index, const std::string& query, const DualEncoder& student, int k) {
    if (k < 1) throw DomainError("k must be at least 1");
    const RowVector q = student.encode_query(query);
    return search(index, q, k);
}

void save_index(const std::filesystem::path& path, const RetrievalIndex& index) {
    std::vector<float> data(static_cast<std::size_t>(index.vectors.size()));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(index.vectors.data()[i]);
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["dim"] = index.dim;
    j["backend"] = index.backend;
    j["ids"] = index.ids;
    j["vectors"] = base64_encode(std::string_view(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float)));
    j["student_checkpoint"] = index.student_checkpoint;
    write_text_file(path, j.dump() + "\n");
}

RetrievalIndex load_index(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("index is not valid JSON: " + std::string(e.what()));
    }
    if (j.value("schema_version", 0) != 1) throw SchemaError("unsupported index schema_version");
    RetrievalIndex index;
    try {
        index.dim = j.at("dim").get<int>();
        index.ids = j.at("ids").get<std::vector<std::string>>();
        index.backend = j.value("backend", std::string("exact"));
        index.student_checkpoint = j.value("student_checkpoint", std::string());
        const std::string blob = base64_decode(j.at("vectors").get<std::string>());
        const std::size_t expected = index.ids.size() * static_cast<std::size_t>(index.dim) * sizeof(float);
        if (blob.size() != expected) throw SchemaError("index vector blob has the wrong size");
        index.vectors.resize(static_cast<Eigen::Index>(index.ids.size()), index.dim);
        for (Eigen::Index i = 0; i < index.vectors.size(); ++i) {
            float f;
            std::memcpy(&f, blob.data() + static_cast<std::size_t>(i) * sizeof(float), sizeof(float));
            index.vectors.data()[i] = f;
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("bad index field: " + std::string(e.what()));
    }
    // float32 storage loses a little; restore exact unit rows.
    for (Eigen::Index i = 0; i < index.vectors.rows(); ++i) {
        const double norm = index.vectors.row(i).norm();
        if (norm > 0) index.vectors.row(i) /= norm;
    }
    return index;
}

}  // namespace verigrag::retrieval
