#pragma once

#include "multippi/model.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace multippi {

struct SolverOptions {
    /// Stop once the barrier duality bound falls below this fraction of the objective.
    double relative_gap = 1e-12;
    double barrier_factor = 10.0;
    int max_newton_per_centering = 200;
    int max_newton_total = 4000;
    /// nu_I below truncate_fraction * (max affordable count of I) is reported as 0.
    double truncate_fraction = 1e-12;
};

struct SolverDiagnostics {
    std::string route;
    int outer_iterations = 0;
    int newton_iterations = 0;
    double duality_gap = 0.0;   // absolute bound on objective suboptimality
    double kkt_residual = 0.0;  // max |sum_I P_I^T lambda_I - a| / max|a| (single-budget route)
    /// Two support patterns look equally good; the minimizer may not be unique.
    bool apparent_nonunique = false;
};

/// Dual of the single-budget allocation problem:
///   sup a^T y  s.t.  y_I^T Sigma_I^{-1} y_I <= c_I  for every I.
struct SocpSolution {
    Vector y_star;
    std::vector<double> multipliers;     // alpha_I >= 0
    std::vector<Vector> lambdas;         // optimal weights for the fractional counts (= 2 alpha_I Sigma_I^{-1} y_I at the optimum)
    double objective = 0.0;              // U = a^T y*
    double primal_objective = 0.0;       // sum_I sqrt(c_I) ||lambda_I||_{Sigma_I}
};

struct AllocationPlan {
    SubsetFamily family;
    FractionalAllocation fractional;
    Allocation rounded;
    WeightScheme weights;  // optimal for the rounded counts
    double predicted_variance_fractional = 0.0;
    double predicted_variance_rounded = 0.0;
    Vector spend;    // per budget row, rounded counts
    Vector budgets;
    SolverDiagnostics diagnostics;
};

/// M(n) = sum_I n_I P_I^T Sigma_I^{-1} P_I; its pseudo-inverse is S(n).
Matrix information_matrix(const CovarianceMatrix& sigma, const SubsetFamily& family, std::span<const double> counts);
Matrix information_matrix(const CovarianceMatrix& sigma, const SubsetFamily& family, const Allocation& alloc);
Matrix information_matrix(const CovarianceMatrix& sigma, const SubsetFamily& family, const FractionalAllocation& alloc);

/// a^T M(n)^+ a. UnreachableTarget when supp(a) is not covered by positive counts.
double allocation_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                           std::span<const double> counts);
double allocation_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                           const Allocation& alloc);
double allocation_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                           const FractionalAllocation& alloc);

/// lambda_I = restriction to I of n_I Sigma_I^{-1} P_I M(n)^+ a, for every I with n_I > 0.
WeightScheme optimal_weights(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                             std::span<const double> counts);
WeightScheme optimal_weights(const CovarianceMatrix& sigma, const TargetSpec& target, const SubsetFamily& family,
                             const Allocation& alloc);

/// sum_{n_I > 0} lambda_I^T Sigma_I lambda_I / n_I: the variance of the linear estimator
/// defined by (counts, weights) when the data have covariance `sigma`.
double weights_variance(const CovarianceMatrix& sigma, const SubsetFamily& family, std::span<const double> counts,
                        const WeightScheme& weights);

std::pair<SocpSolution, AllocationPlan> solve_single_budget(const CovarianceMatrix& sigma, const TargetSpec& target,
                                                            const CostModel& cm, const SolverOptions& opts = {});

AllocationPlan solve_multi_budget(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm,
                                  const SolverOptions& opts = {});

/// Picks the single-budget route when m == 1 and every cost is positive, else the general route.
AllocationPlan solve_allocation(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm,
                                const SolverOptions& opts = {});

/// Componentwise floor (tolerant to round-off just below an integer), then, if
/// supp(a) is no longer covered, raises the cheapest affordable zero-count
/// subset holding each missing index to 1.
Allocation round_allocation(const FractionalAllocation& frac, const CostModel& cm, const TargetSpec& target);

/// {1..k}, {2..k}, {2}, ..., {k}.
SubsetFamily restricted_family(int k);

/// argmax_I rho_I / c_I over model subsets (none containing index 1), where
/// rho_I = Cov_I^T Sigma_I^{-1} Cov_I with Cov_I = (Sigma_{i1})_{i in I}.
/// Ties go to the lexicographically smallest subset.
Subset low_budget_winner(const CovarianceMatrix& sigma, const std::vector<Subset>& model_subsets,
                         std::span<const double> costs);

/// rho_I for a model subset.
double multiple_correlation(const CovarianceMatrix& sigma, const Subset& s);

/// Least variance of a plain sample mean a^T Xbar_I over subsets I containing supp(a),
/// with nu_I the largest fractional count the budget allows.
double best_sample_mean_variance(const CovarianceMatrix& sigma, const TargetSpec& target, const CostModel& cm);

}  // namespace multippi
