#include "multippi/linalg.hpp"

#include <cmath>

namespace multippi::linalg {

Matrix pseudo_inverse_symmetric(const Matrix& m, double rel_cutoff) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector& ev = eig.eigenvalues();
    const double scale = ev.cwiseAbs().maxCoeff();
    Vector inv = Vector::Zero(ev.size());
    if (scale > 0.0)
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            if (std::abs(ev(i)) > rel_cutoff * scale) inv(i) = 1.0 / ev(i);
    Matrix out = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

Matrix embed(const Matrix& block, const Subset& s, int k) {
    Matrix out = Matrix::Zero(k, k);
    const auto& idx = s.indices();
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j)
            out(idx[i] - 1, idx[j] - 1) = block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

Vector restrict(const Vector& v, const Subset& s) {
    const auto& idx = s.indices();
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i] - 1);
    return out;
}

}  // namespace multippi::linalg
