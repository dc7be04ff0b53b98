#include "verigrag/autograd.hpp"

#include "verigrag/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>

namespace verigrag::ag {

namespace {

thread_local bool g_grad_enabled = true;

template <class Expr>
void accumulate(Node& n, const Expr& g) {
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

}  // namespace

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() requires a 1x1 tensor");
    return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

Tensor make_op(Matrix value, std::initializer_list<Tensor> inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& t : inputs) any = any || t.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const auto& t : inputs) node->inputs.push_back(t.shared());
            node->backward = std::move(fn);
        }
    }
    return Tensor(std::move(node));
}

Tensor make_op_vec(Matrix value, const std::vector<Tensor>& inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& t : inputs) any = any || t.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const auto& t : inputs) node->inputs.push_back(t.shared());
            node->backward = std::move(fn);
        }
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward() requires a 1x1 root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad = Matrix::Ones(1, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) {
            n->backward(*n);
            // Intermediate gradients are no longer needed once propagated.
            n->grad.resize(0, 0);
        }
    }
}

Tensor constant(Matrix value) { return Tensor(std::move(value), false); }

Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
    }
    Matrix v = a.value() * b.value();
    return make_op(std::move(v), {a, b}, [](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        if (x.requires_grad) accumulate(x, Matrix(self.grad * y.value.transpose()));
        if (y.requires_grad) accumulate(y, Matrix(x.value.transpose() * self.grad));
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        accumulate(*self.inputs[1], self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        accumulate(*self.inputs[1], Matrix(-self.grad));
    });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
        Node& x = *self.inputs[0];
        Node& y = *self.inputs[1];
        if (x.requires_grad) accumulate(x, Matrix(self.grad.cwiseProduct(y.value)));
        if (y.requires_grad) accumulate(y, Matrix(self.grad.cwiseProduct(x.value)));
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols(a)");
    Matrix v = a.value().rowwise() + row.value().row(0);
    return make_op(std::move(v), {a, row}, [](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        if (self.inputs[1]->requires_grad) accumulate(*self.inputs[1], Matrix(self.grad.colwise().sum()));
    });
}

Tensor scale(const Tensor& a, double s) {
    return make_op(a.value() * s, {a}, [s](Node& self) { accumulate(*self.inputs[0], Matrix(self.grad * s)); });
}

Tensor add_scalar(const Tensor& a, double s) {
    Matrix v = a.value().array() + s;
    return make_op(std::move(v), {a}, [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
    if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scale must be 1x1");
    return make_op(a.value() * s.value()(0, 0), {a, s}, [](Node& self) {
        Node& x = *self.inputs[0];
        Node& k = *self.inputs[1];
        if (x.requires_grad) accumulate(x, Matrix(self.grad * k.value(0, 0)));
        if (k.requires_grad) accumulate(k, Matrix::Constant(1, 1, self.grad.cwiseProduct(x.value).sum()));
    });
}

Tensor relu(const Tensor& a) {
    return make_op(a.value().cwiseMax(0.0), {a}, [](Node& self) {
        Node& x = *self.inputs[0];
        accumulate(x, Matrix((x.value.array() > 0.0).select(self.grad.array(), 0.0)));
    });
}

Tensor gelu(const Tensor& a) {
    // tanh approximation
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    Matrix v = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); });
    return make_op(std::move(v), {a}, [](Node& self) {
        Node& x = *self.inputs[0];
        Matrix d = x.value.unaryExpr([](double u) {
            double inner = k * (u + c * u * u * u);
            double t = std::tanh(inner);
            return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * k * (1.0 + 3.0 * c * u * u);
        });
        accumulate(x, Matrix(self.grad.cwiseProduct(d)));
    });
}

Tensor tanh(const Tensor& a) {
    Matrix v = a.value().array().tanh();
    return make_op(std::move(v), {a}, [](Node& self) {
        Matrix d = 1.0 - self.value.array().square();
        accumulate(*self.inputs[0], Matrix(self.grad.cwiseProduct(d)));
    });
}

Tensor exp(const Tensor& a) {
    Matrix v = a.value().array().exp();
    return make_op(std::move(v), {a}, [](Node& self) {
        accumulate(*self.inputs[0], Matrix(self.grad.cwiseProduct(self.value)));
    });
}

Tensor log(const Tensor& a) {
    if ((a.value().array() <= 0.0).any()) throw DomainError("log: non-positive input");
    Matrix v = a.value().array().log();
    return make_op(std::move(v), {a}, [](Node& self) {
        Node& x = *self.inputs[0];
        accumulate(x, Matrix(self.grad.cwiseQuotient(x.value)));
    });
}

Tensor sum(const Tensor& a) {
    return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
        Node& x = *self.inputs[0];
        accumulate(x, Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ShapeError("mean of empty tensor");
    return make_op(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [n](Node& self) {
        Node& x = *self.inputs[0];
        accumulate(x, Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0) / n));
    });
}

Tensor mean_rows(const Tensor& a) {
    const auto r = a.rows();
    if (r == 0) throw ShapeError("mean_rows of empty tensor");
    Matrix v = a.value().colwise().sum() / static_cast<double>(r);
    return make_op(std::move(v), {a}, [r](Node& self) {
        Matrix g = self.grad.replicate(r, 1) / static_cast<double>(r);
        accumulate(*self.inputs[0], g);
    });
}

Tensor sum_cols(const Tensor& a) {
    Matrix v = a.value().rowwise().sum();
    return make_op(std::move(v), {a}, [](Node& self) {
        Node& x = *self.inputs[0];
        accumulate(x, Matrix(self.grad.replicate(1, x.value.cols())));
    });
}

Tensor max_rows(const Tensor& a) {
    if (a.rows() == 0) throw ShapeError("max_rows of empty tensor");
    const auto cols = a.cols();
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(cols), 0);
    Matrix v(1, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < a.rows(); ++r) {
            if (a.value()(r, c) > a.value()(best, c)) best = r;
        }
        arg[static_cast<std::size_t>(c)] = best;
        v(0, c) = a.value()(best, c);
    }
    return make_op(std::move(v), {a}, [arg = std::move(arg)](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        for (std::size_t c = 0; c < arg.size(); ++c) {
            g(arg[c], static_cast<Eigen::Index>(c)) = self.grad(0, static_cast<Eigen::Index>(c));
        }
        accumulate(x, g);
    });
}

Tensor transpose(const Tensor& a) {
    return make_op(a.value().transpose(), {a}, [](Node& self) {
        accumulate(*self.inputs[0], Matrix(self.grad.transpose()));
    });
}

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
    Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
    return make_op(std::move(v), {a}, [](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g = Eigen::Map<const Matrix>(self.grad.data(), x.value.rows(), x.value.cols());
        accumulate(x, g);
    });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    Matrix v = a.value().middleRows(start, count);
    return make_op(std::move(v), {a}, [start, count](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        g.middleRows(start, count) = self.grad;
        accumulate(x, g);
    });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    Matrix v = a.value().middleCols(start, count);
    return make_op(std::move(v), {a}, [start, count](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        g.middleCols(start, count) = self.grad;
        accumulate(x, g);
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const auto cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.rows();
    }
    Matrix v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return make_op_vec(std::move(v), parts, [](Node& self) {
        Eigen::Index offset = 0;
        for (auto& in : self.inputs) {
            const auto r = in->value.rows();
            if (in->requires_grad) accumulate(*in, Matrix(self.grad.middleRows(offset, r)));
            offset += r;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const auto rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return make_op_vec(std::move(v), parts, [](Node& self) {
        Eigen::Index offset = 0;
        for (auto& in : self.inputs) {
            const auto c = in->value.cols();
            if (in->requires_grad) accumulate(*in, Matrix(self.grad.middleCols(offset, c)));
            offset += c;
        }
    });
}

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
    Matrix v(static_cast<Eigen::Index>(index.size()), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
        v.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
    }
    std::vector<int> idx(index.begin(), index.end());
    return make_op(std::move(v), {a}, [idx = std::move(idx)](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
        accumulate(x, g);
    });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const int> index, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw ShapeError("scatter_add_rows: index length");
    Matrix v = Matrix::Zero(rows, a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= rows) throw ShapeError("scatter_add_rows: index out of range");
        v.row(index[i]) += a.value().row(static_cast<Eigen::Index>(i));
    }
    std::vector<int> idx(index.begin(), index.end());
    return make_op(std::move(v), {a}, [idx = std::move(idx)](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g(x.value.rows(), x.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = self.grad.row(idx[i]);
        accumulate(x, g);
    });
}

namespace {

Matrix softmax_value(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

Matrix log_softmax_value(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
        out.row(r) = logits.row(r).array() - lse;
    }
    return out;
}

}  // namespace

Tensor softmax_rows(const Tensor& a, const Matrix* additive_mask) {
    Matrix logits = a.value();
    if (additive_mask) {
        if (additive_mask->rows() != logits.rows() || additive_mask->cols() != logits.cols()) {
            throw ShapeError("softmax_rows: mask shape mismatch");
        }
        logits += *additive_mask;
    }
    return make_op(softmax_value(logits), {a}, [](Node& self) {
        const Matrix& p = self.value;
        Matrix dot = self.grad.cwiseProduct(p).rowwise().sum();
        Matrix g = p.cwiseProduct(self.grad - dot.replicate(1, p.cols()));
        accumulate(*self.inputs[0], g);
    });
}

Tensor log_softmax_rows(const Tensor& a) {
    return make_op(log_softmax_value(a.value()), {a}, [](Node& self) {
        Matrix p = self.value.array().exp();
        Matrix gsum = self.grad.rowwise().sum();
        Matrix g = self.grad - p.cwiseProduct(gsum.replicate(1, p.cols()));
        accumulate(*self.inputs[0], g);
    });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
    const auto cols = a.cols();
    if (gamma.cols() != cols || beta.cols() != cols) throw ShapeError("layer_norm: parameter width");
    Matrix xhat(a.rows(), cols);
    Matrix inv_std(a.rows(), 1);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double mu = a.value().row(r).mean();
        const double var = (a.value().row(r).array() - mu).square().mean();
        inv_std(r, 0) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r, 0);
    }
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    return make_op(std::move(out), {a, gamma, beta},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& x = *self.inputs[0];
                       Node& g = *self.inputs[1];
                       Node& b = *self.inputs[2];
                       if (g.requires_grad) accumulate(g, Matrix(self.grad.cwiseProduct(xhat).colwise().sum()));
                       if (b.requires_grad) accumulate(b, Matrix(self.grad.colwise().sum()));
                       if (x.requires_grad) {
                           const double n = static_cast<double>(xhat.cols());
                           Matrix dxhat = self.grad.array().rowwise() * g.value.row(0).array();
                           Matrix dx(xhat.rows(), xhat.cols());
                           for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                               const double s1 = dxhat.row(r).sum();
                               const double s2 = dxhat.row(r).dot(xhat.row(r));
                               dx.row(r) = (inv_std(r, 0) / n) *
                                           (n * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
                           }
                           accumulate(x, dx);
                       }
                   });
}

Tensor normalize_rows(const Tensor& a) {
    Matrix norms = a.value().rowwise().norm();
    for (Eigen::Index r = 0; r < norms.rows(); ++r) {
        if (!(norms(r, 0) > 1e-12)) throw DegenerateInput("normalize_rows: row " + std::to_string(r) + " has zero norm");
    }
    Matrix v = a.value().array().colwise() / norms.col(0).array();
    return make_op(std::move(v), {a}, [norms = std::move(norms)](Node& self) {
        const Matrix& y = self.value;
        Matrix dot = self.grad.cwiseProduct(y).rowwise().sum();
        Matrix g = (self.grad - y.cwiseProduct(dot.replicate(1, y.cols()))).array().colwise() / norms.col(0).array();
        accumulate(*self.inputs[0], g);
    });
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) throw ShapeError("cross_entropy: target count");
    Matrix logp = log_softmax_value(logits.value());
    Matrix v(logits.rows(), 1);
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (targets[r] < 0 || targets[r] >= logits.cols()) throw ShapeError("cross_entropy: target out of range");
        v(static_cast<Eigen::Index>(r), 0) = -logp(static_cast<Eigen::Index>(r), targets[r]);
    }
    std::vector<int> tgt(targets.begin(), targets.end());
    return make_op(std::move(v), {logits}, [logp = std::move(logp), tgt = std::move(tgt)](Node& self) {
        Matrix g = logp.array().exp();
        for (std::size_t r = 0; r < tgt.size(); ++r) g(static_cast<Eigen::Index>(r), tgt[r]) -= 1.0;
        g.array().colwise() *= self.grad.col(0).array();
        accumulate(*self.inputs[0], g);
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    return mean(cross_entropy_rows(logits, targets));
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels) {
    if (logits.cols() != 1 || static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
        throw ShapeError("bce_with_logits: expects N x 1 logits and N labels");
    }
    const double n = static_cast<double>(labels.size());
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double z = logits.value()(static_cast<Eigen::Index>(i), 0);
        // max(z,0) - z*y + log(1 + exp(-|z|))
        total += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
    }
    std::vector<double> y(labels.begin(), labels.end());
    return make_op(Matrix::Constant(1, 1, total / n), {logits}, [y = std::move(y), n](Node& self) {
        Node& x = *self.inputs[0];
        Matrix g(x.value.rows(), 1);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double z = x.value(static_cast<Eigen::Index>(i), 0);
            const double sig = 1.0 / (1.0 + std::exp(-z));
            g(static_cast<Eigen::Index>(i), 0) = (sig - y[i]) / n * self.grad(0, 0);
        }
        accumulate(x, g);
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    Tensor d = sub(a, b);
    return mean(hadamard(d, d));
}

}  // namespace verigrag::ag
