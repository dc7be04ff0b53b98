#include "verigrag/contrastive.hpp"

#include "verigrag/errors.hpp"

#include <numeric>
#include <vector>

namespace verigrag::contrastive {

namespace {

std::vector<int> arange(Eigen::Index n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

void check_tau(double tau) {
    if (!(tau > 0.0)) throw DomainError("temperature must be positive");
}

void check_square(const Tensor& s) {
    if (s.rows() != s.cols() || s.rows() < 1) throw ShapeError("similarity matrix must be square and non-empty");
}

}  // namespace

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ShapeError("cosine_matrix: column counts differ");
    return ag::matmul(ag::normalize_rows(a), ag::transpose(ag::normalize_rows(b)));
}

Tensor info_nce_from_similarity(const Tensor& similarity, double tau) {
    check_tau(tau);
    check_square(similarity);
    const auto targets = arange(similarity.rows());
    // cross_entropy subtracts the row maximum before exponentiating.
    return ag::cross_entropy(ag::scale(similarity, 1.0 / tau), targets);
}

Tensor info_nce(const Tensor& z1, const Tensor& z2, double tau) {
    check_tau(tau);
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols() || z1.rows() < 1) {
        throw ShapeError("info_nce: Z1 and Z2 must have the same non-empty shape");
    }
    if (!z1.value().allFinite() || !z2.value().allFinite()) throw DomainError("info_nce: non-finite input");
    return info_nce_from_similarity(cosine_matrix(z1, z2), tau);
}

Tensor symmetric_info_nce_from_similarity(const Tensor& similarity, double tau) {
    Tensor forward = info_nce_from_similarity(similarity, tau);
    Tensor backward = info_nce_from_similarity(ag::transpose(similarity), tau);
    return ag::scale(ag::add(forward, backward), 0.5);
}

}  // namespace verigrag::contrastive
