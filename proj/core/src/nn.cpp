#include "verigrag/nn.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace verigrag::nn {

Tensor ParameterSet::add(const std::string& name, Matrix init) {
    for (const auto& [n, _] : entries_) {
        if (n == name) throw ConfigError("duplicate parameter name: " + name);
    }
    Tensor t = Tensor::parameter(std::move(init));
    entries_.emplace_back(name, t);
    return t;
}

std::vector<Tensor> ParameterSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [_, t] : entries_) out.push_back(t);
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += static_cast<std::size_t>(t.value().size());
    return n;
}

const Tensor& ParameterSet::at(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter: " + name);
}

void ParameterSet::set_requires_grad(bool on) {
    for (auto& [_, t] : entries_) t.set_requires_grad(on);
}

void ParameterSet::zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
}

nlohmann::ordered_json ParameterSet::to_json() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [name, t] : entries_) {
        const Matrix& m = t.value();
        out[name] = {{"shape", {m.rows(), m.cols()}},
                     {"data", std::vector<double>(m.data(), m.data() + m.size())}};
    }
    return out;
}

void ParameterSet::load_json(const nlohmann::json& params) {
    for (auto& [name, t] : entries_) {
        if (!params.contains(name)) throw SchemaError("checkpoint is missing parameter '" + name + "'");
        const auto& rec = params.at(name);
        const auto shape = rec.at("shape").get<std::vector<Eigen::Index>>();
        const auto data = rec.at("data").get<std::vector<double>>();
        if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() ||
            static_cast<Eigen::Index>(data.size()) != t.rows() * t.cols()) {
            throw SchemaError("parameter '" + name + "' has an incompatible shape");
        }
        t.mutable_value() = Eigen::Map<const Matrix>(data.data(), t.rows(), t.cols());
    }
}

std::string ParameterSet::fingerprint() const {
    Sha256 h;
    for (const auto& [name, t] : entries_) {
        h.update(name);
        const std::int64_t shape[2] = {t.rows(), t.cols()};
        h.update(std::string_view(reinterpret_cast<const char*>(shape), sizeof(shape)));
        h.update(std::string_view(reinterpret_cast<const char*>(t.value().data()),
                                  static_cast<std::size_t>(t.value().size()) * sizeof(double)));
    }
    return h.hex_digest();
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

Linear Linear::create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out,
                      std::mt19937_64& rng) {
    Linear l;
    l.weight = params.add(name + ".weight", xavier_uniform(in, out, rng));
    l.bias = params.add(name + ".bias", Matrix::Zero(1, out));
    return l;
}

Tensor Linear::operator()(const Tensor& x) const {
    if (x.cols() != weight.rows()) {
        throw ShapeError("linear: expected input width " + std::to_string(weight.rows()) + ", got " +
                         std::to_string(x.cols()));
    }
    return ag::add_row(ag::matmul(x, weight), bias);
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, Eigen::Index dim) {
    LayerNorm ln;
    ln.gamma = params.add(name + ".gamma", Matrix::Ones(1, dim));
    ln.beta = params.add(name + ".beta", Matrix::Zero(1, dim));
    return ln;
}

Embedding Embedding::create(ParameterSet& params, const std::string& name, Eigen::Index vocab, Eigen::Index dim,
                            std::mt19937_64& rng) {
    Embedding e;
    e.table = params.add(name, normal_matrix(vocab, dim, 0.1, rng));
    return e;
}

Mlp Mlp::create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                Eigen::Index out, std::mt19937_64& rng, bool use_gelu) {
    Mlp m;
    m.fc1 = Linear::create(params, name + ".fc1", in, hidden, rng);
    m.fc2 = Linear::create(params, name + ".fc2", hidden, out, rng);
    m.use_gelu = use_gelu;
    return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = fc1(x);
    h = use_gelu ? ag::gelu(h) : ag::relu(h);
    return fc2(h);
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& name, Eigen::Index dim,
                                              int heads, std::mt19937_64& rng) {
    if (heads < 1 || dim % heads != 0) throw ConfigError("attention: dim must be divisible by heads");
    MultiHeadAttention a;
    a.q = Linear::create(params, name + ".q", dim, dim, rng);
    a.k = Linear::create(params, name + ".k", dim, dim, rng);
    a.v = Linear::create(params, name + ".v", dim, dim, rng);
    a.o = Linear::create(params, name + ".o", dim, dim, rng);
    a.heads = heads;
    return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& query_in, const Tensor& kv_in, const Matrix* mask) const {
    Tensor qs = q(query_in);
    Tensor ks = k(kv_in);
    Tensor vs = v(kv_in);
    const Eigen::Index dim = qs.cols();
    const Eigen::Index head_dim = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = heads == 1 ? qs : ag::slice_cols(qs, h * head_dim, head_dim);
        Tensor kh = heads == 1 ? ks : ag::slice_cols(ks, h * head_dim, head_dim);
        Tensor vh = heads == 1 ? vs : ag::slice_cols(vs, h * head_dim, head_dim);
        Tensor scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
        Tensor weights = ag::softmax_rows(scores, mask);
        outs.push_back(ag::matmul(weights, vh));
    }
    Tensor merged = heads == 1 ? outs.front() : ag::concat_cols(outs);
    return o(merged);
}

TransformerBlock TransformerBlock::create(ParameterSet& params, const std::string& name, Eigen::Index dim,
                                          int heads, Eigen::Index ffn_hidden, std::mt19937_64& rng) {
    TransformerBlock b;
    b.ln1 = LayerNorm::create(params, name + ".ln1", dim);
    b.attn = MultiHeadAttention::create(params, name + ".attn", dim, heads, rng);
    b.ln2 = LayerNorm::create(params, name + ".ln2", dim);
    b.ffn = Mlp::create(params, name + ".ffn", dim, ffn_hidden, dim, rng, true);
    return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, const Matrix* mask) const {
    Tensor h = ln1(x);
    Tensor y = ag::add(x, attn(h, h, mask));
    return ag::add(y, ffn(ln2(y)));
}

Matrix causal_mask(Eigen::Index n) {
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = r + 1; c < n; ++c) m(r, c) = kMaskedOut;
    }
    return m;
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void AdamW::step(double lr) {
    ++t_;
    double clip_scale = 1.0;
    if (opt_.grad_clip > 0) {
        double sq = 0.0;
        for (const auto& p : params_) {
            if (p.grad().size() != 0) sq += p.grad().squaredNorm();
        }
        const double norm = std::sqrt(sq);
        if (norm > opt_.grad_clip) clip_scale = opt_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor p = params_[i];
        if (p.grad().size() == 0) continue;
        const Matrix g = p.grad() * clip_scale;
        m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
        v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
        Matrix& w = p.mutable_value();
        if (opt_.weight_decay > 0) w *= (1.0 - lr * opt_.weight_decay);
        w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double CosineSchedule::at(long step) const {
    const long warmup = static_cast<long>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
    if (warmup > 0 && step < warmup) {
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const long span = std::max<long>(1, total_steps - warmup);
    const double progress = std::clamp(static_cast<double>(step - warmup) / static_cast<double>(span), 0.0, 1.0);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

}  // namespace verigrag::nn
