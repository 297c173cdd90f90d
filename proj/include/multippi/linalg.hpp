#pragma once

#include "multippi/model.hpp"

namespace multippi::linalg {

/// Moore-Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// rel_cutoff * max|eigenvalue| are treated as zero.
Matrix pseudo_inverse_symmetric(const Matrix& m, double rel_cutoff = 1e-12);

/// P_I^T A P_I: places the |I| x |I| block `block` at the rows/cols of `s` in a k x k zero matrix.
Matrix embed(const Matrix& block, const Subset& s, int k);

/// Restriction of a length-k vector to the coordinates of `s`.
Vector restrict(const Vector& v, const Subset& s);

}  // namespace multippi::linalg
