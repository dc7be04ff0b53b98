#pragma once

// In-batch contrastive objectives. Row i of one side is the positive for row i
// of the other; every other row in the batch is a negative.

#include "verigrag/autograd.hpp"

namespace verigrag::contrastive {

using ag::Tensor;

/// Row-normalized A times row-normalized B transposed. Throws DegenerateInput on a zero row.
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

/// -(1/B) sum_i log softmax_j(S_ij / tau)[i] for a square similarity matrix.
Tensor info_nce_from_similarity(const Tensor& similarity, double tau);

/// InfoNCE over cosine similarity of Z1 rows against Z2 rows.
/// Throws DomainError for tau <= 0 or non-finite input, ShapeError on a shape
/// mismatch, DegenerateInput on a zero row.
Tensor info_nce(const Tensor& z1, const Tensor& z2, double tau);

/// Mean of the row-wise and column-wise InfoNCE of a square similarity matrix.
Tensor symmetric_info_nce_from_similarity(const Tensor& similarity, double tau);

}  // namespace verigrag::contrastive
