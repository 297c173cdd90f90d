#pragma once

#include "multippi/estimators.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace multippi {

/// Deterministic per-(seed, trial, stream) generator.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream);

class PopulationSource {
public:
    enum class Kind { Gaussian, Empirical };

    static PopulationSource gaussian(Vector mu, Matrix sigma);
    static PopulationSource empirical(Matrix rows, bool with_replacement = true);

    Kind kind() const noexcept { return kind_; }
    int k() const noexcept { return static_cast<int>(mu_.size()); }
    /// Population mean: mu, or the column means of the dataset.
    const Vector& mean() const noexcept { return mu_; }
    const Matrix& sigma() const noexcept { return sigma_; }
    const Matrix& rows() const noexcept { return rows_; }
    bool with_replacement() const noexcept { return with_replacement_; }
    double theta_star(const TargetSpec& target) const;

    /// n i.i.d. rows of X_I. For the empirical source without replacement, rows
    /// come from `pool` starting at `offset`, which is advanced.
    Matrix draw(const Subset& s, std::int64_t n, std::mt19937_64& rng) const;
    Matrix draw_from_pool(const Subset& s, std::int64_t n, const std::vector<std::int64_t>& pool,
                          std::size_t& offset) const;

    /// Summary of n fresh rows of X_I. Gaussian sources sample the sufficient
    /// statistics directly (mean and Wishart covariance) when `fast` is set.
    BatchSummary draw_summary(const Subset& s, std::int64_t n, std::mt19937_64& rng, bool fast) const;

private:
    Kind kind_ = Kind::Gaussian;
    Vector mu_;
    Matrix sigma_;
    Matrix rows_;
    bool with_replacement_ = true;
};

/// Model-subset costs (subsets of {2..k}), one budget row with a placeholder budget of 1.
/// Each model i has cost per_model[i-2]; a subset costs the sum.
CostModel cost_additive(const std::vector<double>& per_model_costs);

/// Tier t (variable t+2) has word budget tiers[t]; c_S = output_rate * max S + input_rate * sum S.
CostModel cost_cascading(double input_rate, double output_rate, const std::vector<double>& tiers);

struct TrialBatches {
    Matrix labeled;  // N x k
    std::vector<SampleBatch> batches;
};

/// Labeled rows plus one batch per positive count; the full subset reuses the
/// first n labeled rows, everything else is drawn fresh.
TrialBatches draw_trial(const PopulationSource& source, const SubsetFamily& family, const Allocation& alloc,
                        std::int64_t n_labeled, std::uint64_t seed);

enum class MethodKind { Classical, Ppi, PpiPlusPlus, PpiPlusPlusVector, Cascade, MultiPPI, MultiPPIRestricted };

struct Method {
    MethodKind kind = MethodKind::Classical;
    int proxy = 0;  // variable index for ppi / ppi++
    std::string label;
};

/// classical | ppi:j | ppi++:j | ppi++vector | cascade | multippi | multippi_restricted
Method parse_method(const std::string& text);

enum class CiWidthMode { RatioOfMeans, MeanOfRatios };
enum class PpiBudgetPolicy { CapThenSpend, Reoptimize };

struct ExperimentConfig {
    PopulationSource source;
    std::vector<Method> methods;
    std::vector<double> budgets;
    int trials = 20000;
    std::int64_t n_labeled = 250;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    CostModel model_costs;  // from cost_additive / cost_cascading
    std::optional<TargetSpec> target;  // default e_1
    CovarianceMethod covariance_method = CovarianceMethod::LedoitWolf;
    CiWidthMode ci_width = CiWidthMode::RatioOfMeans;
    PpiBudgetPolicy ppi_policy = PpiBudgetPolicy::CapThenSpend;
    bool fast_gaussian = true;
    SolverOptions solver;
};

struct MetricsRow {
    std::string method;
    double budget = 0.0;
    double coverage = 0.0;
    double ci_width_fraction = 0.0;
    double mse_fraction = 0.0;
    int trials = 0;
    // Raw aggregates behind the fractions.
    double mse = 0.0;
    double mean_sq_width = 0.0;
    double mean_error = 0.0;
};

std::vector<MetricsRow> run_grid(const ExperimentConfig& config);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

struct DecayPoint {
    std::int64_t n_unlabeled = 0;
    double bias = 0.0;      // |mean(theta_hat) - theta*|
    double std_error = 0.0;
    double mean_lambda = 0.0;
};

/// Bias of PPI++ with lambda tuned on the same n labeled pairs (X_1, X_proxy),
/// for each unlabeled size in the grid. Unlabeled draws are nested across the
/// grid within a trial.
std::vector<DecayPoint> coverage_decay_demo(const PopulationSource& source, int proxy, std::int64_t n,
                                            const std::vector<std::int64_t>& grid, int trials, std::uint64_t seed);

}  // namespace multippi
