#include "multippi/allocator.hpp"

#include "multippi/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace multippi {

namespace {

constexpr double kPinvCutoff = 1e-12;

void check_dims(const CovarianceMatrix& sigma, const SubsetFamily& family, std::size_t n_counts) {
    if (sigma.k() != family.k())
        throw Error(ErrorCode::InvalidArgument, "covariance is " + std::to_string(sigma.k()) + "x" +
                                                    std::to_string(sigma.k()) + " but the family has k=" +
                                                    std::to_string(family.k()));
    if (n_counts != family.size()) throw Error(ErrorCode::UnknownSubset, "allocation is not keyed by the family");
}

void check_target(const TargetSpec& target, const SubsetFamily& family) {
    if (target.k() != family.k()) throw Error(ErrorCode::InvalidArgument, "target length differs from k");
}

/// Coordinates (0-based) in the union of the given subsets.
std::vector<int> union_coords(const SubsetFamily& family, std::span<const double> counts) {
    std::vector<int> u;
    for (int i : support_union(counts, family)) u.push_back(i - 1);
    return u;
}

Matrix restrict_matrix(const Matrix& m, const std::vector<int>& coords) {
    const auto n = static_cast<Eigen::Index>(coords.size());
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
    return out;
}

/// w = M^+ a, with supp(a) checked against the union of positive-count subsets.
Vector information_solve(const Matrix& m, const std::vector<int>& coords, const TargetSpec& target) {
    std::vector<int> one_based;
    for (int c : coords) one_based.push_back(c + 1);
    if (!covers(one_based, target.support()))
        throw Error(ErrorCode::UnreachableTarget, "supp(a) is not covered by subsets with positive counts");
    const Matrix block = restrict_matrix(m, coords);
    Vector a_r(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) a_r(static_cast<Eigen::Index>(i)) = target.a()(coords[i]);
    const Matrix pinv = linalg::pseudo_inverse_symmetric(block, kPinvCutoff);
    Vector w_r = pinv * a_r;
    w_r += pinv * (a_r - block * w_r);  // one refinement step
    Vector w = Vector::Zero(m.rows());
    for (std::size_t i = 0; i < coords.size(); ++i) w(coords[i]) = w_r(static_cast<Eigen::Index>(i));
    return w;
}

double max_affordable(const CostModel& cm, std::size_t i) {
    double u = std::numeric_limits<double>::infinity();
    for (int l = 0; l < cm.rows(); ++l) {
        const double c = cm.costs()(static_cast<Eigen::Index>(i), l);
        if (c > 0.0) u = std::min(u, cm.budgets()(l) / c);
    }
    return u;
}

/// Floor that forgives round-off just below an integer.
std::int64_t tolerant_floor(double v) {
    if (!(v > 0.0)) return 0;
    return static_cast<std::int64_t>(std::floor(v + 1e-9 * std::max(1.0, v)));
}

/// Decrements the largest counts (>= 2, so coverage is kept) until `alloc` fits the budget.
bool make_room_for(Allocation& alloc, std::size_t keep, const CostModel& cm) {
    while (true) {
        const auto real = alloc.as_real();
        if (cm.affordable(real)) return true;
        const Vector over = cm.spend(real) - cm.budgets();
        std::optional<std::size_t> pick;
        for (std::size_t j = 0; j < alloc.counts.size(); ++j) {
            if (j == keep || alloc.counts[j] < 2) continue;
            bool helps = false;
            for (int l = 0; l < cm.rows(); ++l)
                helps = helps || (over(l) > 0.0 && cm.costs()(static_cast<Eigen::Index>(j), l) > 0.0);
            if (helps && (!pick || alloc.counts[j] > alloc.counts[*pick])) pick = j;
        }
        if (!pick) return false;
        --alloc.counts[*pick];
    }
}

AllocationPlan finalize_plan(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm,
                             FractionalAllocation frac, SolverDiagnostics diag) {
    AllocationPlan plan;
    plan.family = cm.family();
    plan.budgets = cm.budgets();
    plan.predicted_variance_fractional = allocation_variance(sigma, target, cm.family(), frac);
    plan.fractional = std::move(frac);
    plan.rounded = round_allocation(plan.fractional, cm, target);
    const auto counts = plan.rounded.as_real();
    plan.weights = optimal_weights(sigma, target, cm.family(), counts);
    plan.predicted_variance_rounded = allocation_variance(sigma, target, cm.family(), counts);
    plan.spend = cm.spend(counts);
    plan.diagnostics = std::move(diag);
    return plan;
}

}  // namespace

// ---------------------------------------------------- information matrix

Matrix information_matrix(const CovarianceMatrix& sigma, const SubsetFamily& family, std::span<const double> counts) {
    check_dims(sigma, family, counts.size());
    Matrix m = Matrix::Zero(sigma.k(), sigma.k());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative count");
        if (counts[i] == 0.0) continue;
        m += counts[i] * linalg::embed(sigma.submatrix_inverse(family[i]), family[i], sigma.k());
    }
    return 0.5 * (m + m.transpose());
}

Matrix information_matrix(const CovarianceMatrix& sigma, const SubsetFamily& family, const Allocation& alloc) {
    const auto real = alloc.as_real();
    return information_matrix(sigma, family, std::span<const double>(real));
}

Matrix information_matrix(const CovarianceMatrix& sigma, const SubsetFamily& family, const FractionalAllocation& alloc) {
    return information_matrix(sigma, family, std::span<const double>(alloc.weights));
}

double allocation_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                           std::span<const double> counts) {
    check_target(target, family);
    const Matrix m = information_matrix(sigma, family, counts);
    const Vector w = information_solve(m, union_coords(family, counts), target);
    return std::max(0.0, target.a().dot(w));
}

double allocation_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                           const Allocation& alloc) {
    const auto real = alloc.as_real();
    return allocation_variance(sigma, target, family, std::span<const double>(real));
}

double allocation_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                           const FractionalAllocation& alloc) {
    return allocation_variance(sigma, target, family, std::span<const double>(alloc.weights));
}

WeightScheme optimal_weights(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                             std::span<const double> counts) {
    check_target(target, family);
    const Matrix m = information_matrix(sigma, family, counts);
    const Vector w = information_solve(m, union_coords(family, counts), target);
    WeightScheme ws;
    ws.lambdas.resize(family.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] <= 0.0) continue;
        ws.lambdas[i] = counts[i] * (sigma.submatrix_inverse(family[i]) * linalg::restrict(w, family[i]));
    }
    return ws;
}

WeightScheme optimal_weights(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                             const Allocation& alloc) {
    const auto real = alloc.as_real();
    return optimal_weights(sigma, target, family, std::span<const double>(real));
}

double weights_variance(const CovarianceMatrix& sigma, const SubsetFamily& family, std::span<const double> counts,
                        const WeightScheme& weights) {
    check_dims(sigma, family, counts.size());
    double v = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] <= 0.0 || !weights.lambdas[i]) continue;
        const Vector& l = *weights.lambdas[i];
        v += l.dot(sigma.submatrix(family[i]) * l) / counts[i];
    }
    return v;
}

// ------------------------------------------------------ single budget

std::pair<SocpSolution, AllocationPlan> solve_single_budget(const CovarianceMatrix& sigma, const TargetSpec& target,
                                                            const CostModel& cm, const SolverOptions& opts) {
    validate_cost_model(cm);
    const auto& family = cm.family();
    check_target(target, family);
    if (sigma.k() != family.k()) throw Error(ErrorCode::InvalidArgument, "covariance size differs from k");
    if (cm.rows() != 1) throw Error(ErrorCode::InvalidArgument, "single-budget route needs exactly one budget row");
    sigma.require_positive_definite();
    const double budget = cm.budgets()(0);
    const std::size_t p = family.size();
    std::vector<double> c(p);
    for (std::size_t i = 0; i < p; ++i) {
        c[i] = cm.costs()(static_cast<Eigen::Index>(i), 0);
        if (!(c[i] > 0.0)) throw Error(ErrorCode::ZeroCostSubset, "single-budget route needs c_I > 0 for every I");
    }

    // Work on the coordinates some subset can observe.
    const std::vector<double> ones(p, 1.0);
    const std::vector<int> coords = union_coords(family, ones);
    {
        std::vector<int> one_based;
        for (int x : coords) one_based.push_back(x + 1);
        if (!covers(one_based, target.support()))
            throw Error(ErrorCode::UnreachableTarget, "supp(a) is not covered by the subset family");
    }
    const auto kr = static_cast<Eigen::Index>(coords.size());
    std::vector<int> to_reduced(static_cast<std::size_t>(sigma.k()), -1);
    for (std::size_t r = 0; r < coords.size(); ++r) to_reduced[static_cast<std::size_t>(coords[r])] = static_cast<int>(r);

    std::vector<Matrix> sub_inv(p);
    std::vector<Matrix> q(p);  // embedded Sigma_I^{-1}, reduced coordinates
    for (std::size_t i = 0; i < p; ++i) {
        sub_inv[i] = sigma.submatrix_inverse(family[i]);
        q[i] = Matrix::Zero(kr, kr);
        const auto& idx = family[i].indices();
        for (std::size_t u = 0; u < idx.size(); ++u)
            for (std::size_t v = 0; v < idx.size(); ++v)
                q[i](to_reduced[static_cast<std::size_t>(idx[u] - 1)], to_reduced[static_cast<std::size_t>(idx[v] - 1)]) =
                    sub_inv[i](static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v));
    }
    Vector a(kr);
    for (std::size_t r = 0; r < coords.size(); ++r) a(static_cast<Eigen::Index>(r)) = target.a()(coords[r]);

    auto slack = [&](const Vector& y, std::size_t i) { return c[i] - y.dot(q[i] * y); };
    auto barrier = [&](const Vector& y, double t, bool& feasible) {
        double val = -t * a.dot(y);
        feasible = true;
        for (std::size_t i = 0; i < p; ++i) {
            const double h = slack(y, i);
            if (!(h > 0.0)) {
                feasible = false;
                return 0.0;
            }
            val -= std::log(h);
        }
        return val;
    };

    Vector y = Vector::Zero(kr);
    Matrix h0 = Matrix::Zero(kr, kr);
    for (std::size_t i = 0; i < p; ++i) h0 += 2.0 * q[i] / c[i];
    double t = 1.0 / std::sqrt(a.dot(h0.ldlt().solve(a)));

    SolverDiagnostics diag;
    diag.route = "single_budget_socp";
    const double pd = static_cast<double>(p);
    bool converged = false;
    // Near the optimum c_I - y^T Q y cancels catastrophically, so multipliers read at the
    // final barrier weight are only accurate for slack constraints. The allocation is
    // taken from an earlier, still well-conditioned point on the central path.
    std::optional<std::vector<double>> early_alpha;
    auto alphas_at = [&](const Vector& yy, double tt) {
        std::vector<double> out(p);
        for (std::size_t i = 0; i < p; ++i) out[i] = 1.0 / (tt * slack(yy, i));
        return out;
    };
    while (true) {
        ++diag.outer_iterations;
        int inner = 0;
        for (; inner < opts.max_newton_per_centering; ++inner) {
            Vector g = -t * a;
            Matrix hess = Matrix::Zero(kr, kr);
            for (std::size_t i = 0; i < p; ++i) {
                const double h = slack(y, i);
                const Vector qy = q[i] * y;
                g += 2.0 * qy / h;
                hess += 2.0 * q[i] / h + (4.0 / (h * h)) * qy * qy.transpose();
            }
            const Vector dy = -hess.ldlt().solve(g);
            const double decrement = -g.dot(dy);
            ++diag.newton_iterations;
            if (decrement / 2.0 <= 1e-12) break;
            // Largest step keeping every quadratic constraint strictly feasible.
            double step = 1.0;
            for (std::size_t i = 0; i < p; ++i) {
                // h(y + s dy) = c - (y+s dy)^T Q (y + s dy) = h0 - 2 s yQdy - s^2 dyQdy
                const double qa = dy.dot(q[i] * dy);
                const double qb = 2.0 * y.dot(q[i] * dy);
                const double qc = -slack(y, i);
                if (qa <= 0.0 && qb <= 0.0) continue;
                double root;
                if (qa > 0.0)
                    root = (-qb + std::sqrt(std::max(0.0, qb * qb - 4.0 * qa * qc))) / (2.0 * qa);
                else
                    root = -qc / qb;
                step = std::min(step, 0.99 * root);
            }
            if (decrement > 0.1) {
                bool ok = false;
                const double f0 = barrier(y, t, ok);
                while (step > 1e-14) {
                    bool feasible = false;
                    const double f1 = barrier(y + step * dy, t, feasible);
                    if (feasible && f1 <= f0 - 0.25 * step * decrement) break;
                    step *= 0.5;
                }
            }
            y += step * dy;
            if (diag.newton_iterations > opts.max_newton_total) break;
        }
        if (diag.newton_iterations > opts.max_newton_total) break;
        const double u = a.dot(y);
        if (!early_alpha && u > 0.0 && pd / t <= 1e-10 * u) early_alpha = alphas_at(y, t);
        if (u > 0.0 && pd / t <= opts.relative_gap * u) {
            converged = true;
            break;
        }
        t *= opts.barrier_factor;
    }
    if (!converged) throw Error(ErrorCode::SolverNotConverged, "single-budget barrier exceeded its iteration cap");

    SocpSolution sol;
    sol.objective = a.dot(y);
    sol.y_star = Vector::Zero(sigma.k());
    for (std::size_t r = 0; r < coords.size(); ++r) sol.y_star(coords[r]) = y(static_cast<Eigen::Index>(r));
    sol.multipliers = alphas_at(y, t);
    if (!early_alpha) early_alpha = sol.multipliers;

    // nu_I is proportional to sqrt(c_I) ||lambda_I||_{Sigma_I} / c_I with lambda_I = 2 alpha_I Sigma_I^{-1} y_I.
    auto counts_from = [&](const std::vector<double>& alpha, Vector& combined) {
        std::vector<double> share(p);
        double total = 0.0;
        combined = Vector::Zero(sigma.k());
        for (std::size_t i = 0; i < p; ++i) {
            const Vector yi = linalg::restrict(sol.y_star, family[i]);
            const Vector li = 2.0 * alpha[i] * (sub_inv[i] * yi);
            const auto& idx = family[i].indices();
            for (std::size_t u = 0; u < idx.size(); ++u) combined(idx[u] - 1) += li(static_cast<Eigen::Index>(u));
            share[i] = std::sqrt(c[i]) * std::sqrt(std::max(0.0, li.dot(sigma.submatrix(family[i]) * li)));
            total += share[i];
        }
        for (std::size_t i = 0; i < p; ++i) share[i] = (budget / c[i]) * share[i] / total;
        return share;
    };
    Vector combined;
    const std::vector<double> final_nu = counts_from(sol.multipliers, combined);
    const std::vector<double> nu = counts_from(*early_alpha, combined);
    diag.kkt_residual = (combined - target.a()).cwiseAbs().maxCoeff() / target.a().cwiseAbs().maxCoeff();
    diag.duality_gap = pd / t;

    FractionalAllocation frac{std::vector<double>(p, 0.0)};
    for (std::size_t i = 0; i < p; ++i)
        frac.weights[i] = final_nu[i] < opts.truncate_fraction * budget / c[i] ? 0.0 : nu[i];
    // A tight constraint with a vanishing multiplier means another support could tie.
    for (std::size_t i = 0; i < p; ++i)
        if (frac.weights[i] == 0.0 && slack(y, i) <= 1e-6 * c[i]) diag.apparent_nonunique = true;

    // Report the exactly unbiased weights for nu (they coincide with 2 alpha Sigma^{-1} y at the optimum).
    const auto frac_weights = optimal_weights(sigma, target, family, std::span<const double>(frac.weights));
    sol.lambdas.resize(p);
    sol.primal_objective = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        sol.lambdas[i] = frac_weights.lambdas[i] ? *frac_weights.lambdas[i] : Vector::Zero(static_cast<Eigen::Index>(family[i].size()));
        const double norm = std::sqrt(std::max(0.0, sol.lambdas[i].dot(sigma.submatrix(family[i]) * sol.lambdas[i])));
        sol.primal_objective += std::sqrt(c[i]) * norm;
    }

    AllocationPlan plan = finalize_plan(sigma, target, cm, std::move(frac), std::move(diag));
    return {std::move(sol), std::move(plan)};
}

// ------------------------------------------------------- multi budget

AllocationPlan solve_multi_budget(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm,
                                  const SolverOptions& opts) {
    validate_cost_model(cm);
    const auto& family = cm.family();
    check_target(target, family);
    if (sigma.k() != family.k()) throw Error(ErrorCode::InvalidArgument, "covariance size differs from k");
    sigma.require_positive_definite();
    const std::size_t p = family.size();
    const int m = cm.rows();

    const std::vector<double> ones(p, 1.0);
    const std::vector<int> coords = union_coords(family, ones);
    {
        std::vector<int> one_based;
        for (int x : coords) one_based.push_back(x + 1);
        if (!covers(one_based, target.support()))
            throw Error(ErrorCode::Infeasible, "no affordable subset mix covers supp(a)");
    }
    const auto kr = static_cast<Eigen::Index>(coords.size());
    std::vector<int> to_reduced(static_cast<std::size_t>(sigma.k()), -1);
    for (std::size_t r = 0; r < coords.size(); ++r) to_reduced[static_cast<std::size_t>(coords[r])] = static_cast<int>(r);

    // Variables x_I = nu_I / u_I, with u_I the largest affordable count of I.
    std::vector<double> scale(p);
    std::vector<Matrix> info(p);  // u_I * embedded Sigma_I^{-1}
    for (std::size_t i = 0; i < p; ++i) {
        scale[i] = max_affordable(cm, i);
        const Matrix inv = sigma.submatrix_inverse(family[i]);
        info[i] = Matrix::Zero(kr, kr);
        const auto& idx = family[i].indices();
        for (std::size_t u = 0; u < idx.size(); ++u)
            for (std::size_t v = 0; v < idx.size(); ++v)
                info[i](to_reduced[static_cast<std::size_t>(idx[u] - 1)], to_reduced[static_cast<std::size_t>(idx[v] - 1)]) =
                    scale[i] * inv(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v));
    }
    Matrix rows(m, static_cast<Eigen::Index>(p));  // normalized: sum_I rows(l, I) x_I <= 1
    for (int l = 0; l < m; ++l)
        for (std::size_t i = 0; i < p; ++i)
            rows(l, static_cast<Eigen::Index>(i)) =
                cm.costs()(static_cast<Eigen::Index>(i), l) * scale[i] / cm.budgets()(l);
    Vector a(kr);
    for (std::size_t r = 0; r < coords.size(); ++r) a(static_cast<Eigen::Index>(r)) = target.a()(coords[r]);

    struct Eval {
        double f = 0.0;
        Vector grad;
        Matrix hess;
    };
    auto evaluate = [&](const Vector& x, bool with_hessian) {
        Matrix mm = Matrix::Zero(kr, kr);
        for (std::size_t i = 0; i < p; ++i) mm += x(static_cast<Eigen::Index>(i)) * info[i];
        Eigen::LLT<Matrix> llt(mm);
        Eval e;
        const Vector w = llt.solve(a);
        e.f = a.dot(w);
        e.grad.resize(static_cast<Eigen::Index>(p));
        Matrix aw(kr, static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < p; ++i) {
            aw.col(static_cast<Eigen::Index>(i)) = info[i] * w;
            e.grad(static_cast<Eigen::Index>(i)) = -w.dot(aw.col(static_cast<Eigen::Index>(i)));
        }
        if (with_hessian) {
            const Matrix sol = llt.solve(aw);
            e.hess = 2.0 * aw.transpose() * sol;
        }
        return e;
    };

    Vector x(static_cast<Eigen::Index>(p));
    {
        const double worst = rows.rowwise().sum().maxCoeff();
        x.setConstant(worst > 0.0 ? 0.5 / worst : 0.5);
    }
    const double f0 = evaluate(x, false).f;
    auto slacks = [&](const Vector& v) { return Vector(Vector::Ones(m) - rows * v); };
    auto barrier_value = [&](const Vector& v, double t, bool& feasible) {
        feasible = (v.array() > 0.0).all();
        const Vector s = slacks(v);
        feasible = feasible && (s.array() > 0.0).all();
        if (!feasible) return 0.0;
        return t * evaluate(v, false).f / f0 - v.array().log().sum() - s.array().log().sum();
    };

    const double n_ineq = static_cast<double>(p) + m;
    double t = n_ineq;
    SolverDiagnostics diag;
    diag.route = "multi_budget_barrier";
    bool converged = false;
    double f_cur = 1.0;
    while (true) {
        ++diag.outer_iterations;
        for (int inner = 0; inner < opts.max_newton_per_centering; ++inner) {
            const Eval e = evaluate(x, true);
            f_cur = e.f / f0;
            const Vector s = slacks(x);
            const Vector inv_x = x.cwiseInverse();
            const Vector inv_s = s.cwiseInverse();
            Vector g = t * e.grad / f0 - inv_x + rows.transpose() * inv_s;
            Matrix hess = t * e.hess / f0;
            hess.diagonal() += inv_x.cwiseAbs2();
            hess += rows.transpose() * inv_s.cwiseAbs2().asDiagonal() * rows;
            // Newton in x-scaled coordinates keeps the system well conditioned near the boundary.
            const Matrix scaled = x.asDiagonal() * hess * x.asDiagonal();
            const Vector sg = x.cwiseProduct(g);
            const Vector z = -scaled.ldlt().solve(sg);
            const Vector dx = x.cwiseProduct(z);
            const double decrement = -g.dot(dx);
            ++diag.newton_iterations;
            if (!(decrement >= 0.0) || decrement / 2.0 <= 1e-12) break;
            double step = 1.0;
            for (Eigen::Index i = 0; i < x.size(); ++i)
                if (dx(i) < 0.0) step = std::min(step, -0.99 * x(i) / dx(i));
            const Vector rd = rows * dx;
            for (int l = 0; l < m; ++l)
                if (rd(l) > 0.0) step = std::min(step, 0.99 * s(l) / rd(l));
            if (decrement > 0.1) {
                bool ok = false;
                const double b0 = barrier_value(x, t, ok);
                while (step > 1e-14) {
                    bool feasible = false;
                    const double b1 = barrier_value(x + step * dx, t, feasible);
                    if (feasible && b1 <= b0 - 0.25 * step * decrement) break;
                    step *= 0.5;
                }
            }
            x += step * dx;
            if (diag.newton_iterations > opts.max_newton_total) break;
        }
        if (diag.newton_iterations > opts.max_newton_total) break;
        if (n_ineq / t <= opts.relative_gap * f_cur) {
            converged = true;
            break;
        }
        t *= opts.barrier_factor;
    }
    if (!converged) throw Error(ErrorCode::SolverNotConverged, "multi-budget barrier exceeded its iteration cap");
    diag.duality_gap = n_ineq / t * f0;

    // Reduced costs r_I = grad_I + sum_l mu_l rows(l, I) vanish on the support;
    // a zero-weight subset with r_I ~ 0 could enter without changing the optimum.
    const Eval e = evaluate(x, false);
    const Vector s = slacks(x);
    Vector mu(m);
    for (int l = 0; l < m; ++l) mu(l) = 1.0 / (t * s(l));
    const Vector reduced = e.grad / f0 + rows.transpose() * mu;

    FractionalAllocation frac{std::vector<double>(p, 0.0)};
    for (std::size_t i = 0; i < p; ++i) {
        const double xi = x(static_cast<Eigen::Index>(i));
        frac.weights[i] = xi < opts.truncate_fraction ? 0.0 : xi * scale[i];
    }
    const double grad_scale = (e.grad / f0).cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < p; ++i)
        if (x(static_cast<Eigen::Index>(i)) < 1e-6 && reduced(static_cast<Eigen::Index>(i)) <= 1e-9 * grad_scale)
            diag.apparent_nonunique = true;

    return finalize_plan(sigma, target, cm, std::move(frac), std::move(diag));
}

AllocationPlan solve_allocation(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm,
                                const SolverOptions& opts) {
    validate_cost_model(cm);
    const bool single = cm.rows() == 1 && (cm.costs().array() > 0.0).all();
    if (single) return solve_single_budget(sigma, target, cm, opts).second;
    return solve_multi_budget(sigma, target, cm, opts);
}

// ----------------------------------------------------------- rounding

Allocation round_allocation(const FractionalAllocation& frac, const CostModel& cm, const TargetSpec& target) {
    const auto& family = cm.family();
    if (frac.weights.size() != family.size()) throw Error(ErrorCode::UnknownSubset, "allocation is not keyed by the family");
    Allocation out{std::vector<std::int64_t>(family.size(), 0)};
    for (std::size_t i = 0; i < family.size(); ++i) out.counts[i] = tolerant_floor(frac.weights[i]);

    // The tolerant floor may land exactly on a budget edge; step back if round-off overshot.
    for (std::size_t i = 0; i < family.size(); ++i) {
        auto real = out.as_real();
        while (out.counts[i] > 0 && !cm.affordable(real)) {
            --out.counts[i];
            real = out.as_real();
        }
    }

    const auto required = target.support();
    for (int missing : required) {
        const auto have = support_union(out, family);
        if (std::binary_search(have.begin(), have.end(), missing)) continue;
        // Plain raise first; only if none fits, trim subsets holding >= 2 rows to make room.
        std::optional<Allocation> repaired;
        for (int make_room = 0; make_room < 2 && !repaired; ++make_room) {
            double best_cost = std::numeric_limits<double>::infinity();
            // Prefer subsets the fractional solution used, then any zero-count subset.
            for (int pass = 0; pass < 2 && !repaired; ++pass) {
                for (std::size_t i = 0; i < family.size(); ++i) {
                    if (out.counts[i] != 0 || !family[i].contains(missing)) continue;
                    if (pass == 0 && !(frac.weights[i] > 0.0)) continue;
                    auto trial = out;
                    trial.counts[i] = 1;
                    if (make_room && !make_room_for(trial, i, cm)) continue;
                    if (!make_room && !cm.affordable(trial.as_real())) continue;
                    double norm_cost = 0.0;
                    for (int l = 0; l < cm.rows(); ++l)
                        norm_cost += cm.costs()(static_cast<Eigen::Index>(i), l) / cm.budgets()(l);
                    if (norm_cost < best_cost) {  // strict: family order breaks ties
                        best_cost = norm_cost;
                        repaired = std::move(trial);
                    }
                }
            }
        }
        if (!repaired)
            throw Error(ErrorCode::SupportLostAfterRounding,
                        "no affordable repair covers index " + std::to_string(missing) + " after rounding");
        out = std::move(*repaired);
    }
    return out;
}

// ------------------------------------------------------------- families

SubsetFamily restricted_family(int k) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "restricted family needs k >= 2");
    std::vector<int> all, models;
    for (int i = 1; i <= k; ++i) all.push_back(i);
    for (int i = 2; i <= k; ++i) models.push_back(i);
    std::vector<Subset> subsets{Subset(all)};
    if (k > 2) subsets.emplace_back(models);
    for (int i = 2; i <= k; ++i) subsets.push_back(Subset{i});
    return SubsetFamily(k, std::move(subsets));
}

double multiple_correlation(const CovarianceMatrix& sigma, const Subset& s) {
    if (s.contains(1)) throw Error(ErrorCode::InvalidArgument, "model subsets must exclude index 1");
    Vector cov(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) cov(static_cast<Eigen::Index>(i)) = sigma.matrix()(s.indices()[i] - 1, 0);
    return cov.dot(sigma.submatrix_inverse(s) * cov);
}

Subset low_budget_winner(const CovarianceMatrix& sigma, const std::vector<Subset>& model_subsets,
                         std::span<const double> costs) {
    if (model_subsets.empty()) throw Error(ErrorCode::NoModelSubsets, "no model subsets given");
    if (costs.size() != model_subsets.size()) throw Error(ErrorCode::InvalidArgument, "one cost per model subset is required");
    std::optional<std::size_t> best;
    double best_ratio = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < model_subsets.size(); ++i) {
        if (!(costs[i] > 0.0)) throw Error(ErrorCode::ZeroCostSubset, "model subset costs must be positive");
        const double ratio = multiple_correlation(sigma, model_subsets[i]) / costs[i];
        const double tol = 1e-12 * std::max(std::abs(ratio), std::abs(best_ratio));
        if (!best || ratio > best_ratio + tol ||
            (std::abs(ratio - best_ratio) <= tol && model_subsets[i] < model_subsets[*best])) {
            if (!best || ratio > best_ratio + tol) best_ratio = ratio;
            best = i;
        }
    }
    return model_subsets[*best];
}

double best_sample_mean_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm) {
    validate_cost_model(cm);
    const auto required = target.support();
    const double spread = target.a().dot(sigma.matrix() * target.a());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cm.family().size(); ++i) {
        if (!covers(cm.family()[i].indices(), required)) continue;
        best = std::min(best, spread / max_affordable(cm, i));
    }
    if (!std::isfinite(best))
        throw Error(ErrorCode::UnreachableTarget, "no single subset contains supp(a)");
    return best;
}

}  // namespace multippi
