#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is 2-D; vectors are 1xN rows and scalars are 1x1.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace verigrag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace verigrag

namespace verigrag::ag {

struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
};

/// Shared handle to a node of the computation graph. Copies alias the same
/// node, so parameters held by several modules stay in sync.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Matrix value, bool requires_grad = false);

    static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Matrix& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const;
    void zero_grad() { node_->grad.resize(0, 0); }

    Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node>& shared() const noexcept { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend Tensor make_op(Matrix, std::initializer_list<Tensor>, std::function<void(Node&)>);
    friend Tensor make_op_vec(Matrix, const std::vector<Tensor>&, std::function<void(Node&)>);

    std::shared_ptr<Node> node_;
};

/// Disables graph construction while alive (evaluation of frozen models).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

/// Back-propagates from a 1x1 root into every reachable node that requires grad.
void backward(const Tensor& root);

Tensor make_op(Matrix value, std::initializer_list<Tensor> inputs, std::function<void(Node&)> fn);
Tensor make_op_vec(Matrix value, const std::vector<Tensor>& inputs, std::function<void(Node&)> fn);

Tensor constant(Matrix value);
Tensor scalar(double v);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
/// Adds a 1xC row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// Multiplies a by a 1x1 tensor.
Tensor scale_by(const Tensor& a, const Tensor& s);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column-wise mean over rows: (R x C) -> (1 x C).
Tensor mean_rows(const Tensor& a);
/// Row-wise sum over columns: (R x C) -> (R x 1).
Tensor sum_cols(const Tensor& a);
/// Column-wise max over rows: (R x C) -> (1 x C). Ties resolve to the first row.
Tensor max_rows(const Tensor& a);

Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, std::span<const int> index);
/// out[index[r]] += a[r]; output has `rows` rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const int> index, Eigen::Index rows);

/// Row softmax with an optional additive mask of the same shape.
Tensor softmax_rows(const Tensor& a, const Matrix* additive_mask = nullptr);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Scales every row to unit L2 norm. Throws DegenerateInput on a zero row.
Tensor normalize_rows(const Tensor& a);

/// Per-row negative log-likelihood of `targets` under row softmax: (R x 1).
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets);
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// Mean binary cross-entropy on an (N x 1) logit column.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels);
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace verigrag::ag
