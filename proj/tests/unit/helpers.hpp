#pragma once

#include "multippi/model.hpp"

#include <random>

namespace testing_support {

using multippi::Matrix;
using multippi::Vector;

/// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(std::mt19937_64& rng, int k, double lo = 0.2, double hi = 3.0) {
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> ev(lo, hi);
    Matrix g(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) g(i, j) = n01(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix q = qr.householderQ();
    Vector d(k);
    for (int i = 0; i < k; ++i) d(i) = ev(rng);
    Matrix s = q * d.asDiagonal() * q.transpose();
    return 0.5 * (s + s.transpose());
}

inline Vector random_target(std::mt19937_64& rng, int k) {
    std::normal_distribution<double> n01;
    Vector a(k);
    for (int i = 0; i < k; ++i) a(i) = n01(rng);
    return a;
}

/// Direct evaluation of a^T (sum_I n_I P_I^T Sigma_I^{-1} P_I)^{-1} a by explicit
/// inversion on the covered coordinates; independent of the library's pseudo-inverse path.
inline double oracle_variance(const Matrix& sigma, const std::vector<multippi::Subset>& family,
                              const std::vector<double>& counts, const Vector& a) {
    const int k = static_cast<int>(sigma.rows());
    Matrix m = Matrix::Zero(k, k);
    std::vector<bool> covered(static_cast<std::size_t>(k), false);
    for (std::size_t s = 0; s < family.size(); ++s) {
        if (counts[s] <= 0.0) continue;
        const auto& idx = family[s].indices();
        const int d = static_cast<int>(idx.size());
        Matrix sub(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) sub(i, j) = sigma(idx[i] - 1, idx[j] - 1);
        const Matrix inv = sub.inverse();
        for (int i = 0; i < d; ++i) {
            covered[static_cast<std::size_t>(idx[i] - 1)] = true;
            for (int j = 0; j < d; ++j) m(idx[i] - 1, idx[j] - 1) += counts[s] * inv(i, j);
        }
    }
    std::vector<int> keep;
    for (int i = 0; i < k; ++i) {
        if (covered[static_cast<std::size_t>(i)]) keep.push_back(i);
        else if (a(i) != 0.0) return std::numeric_limits<double>::infinity();
    }
    const int r = static_cast<int>(keep.size());
    Matrix mr(r, r);
    Vector ar(r);
    for (int i = 0; i < r; ++i) {
        ar(i) = a(keep[i]);
        for (int j = 0; j < r; ++j) mr(i, j) = m(keep[i], keep[j]);
    }
    return ar.dot(mr.inverse() * ar);
}

}  // namespace testing_support
