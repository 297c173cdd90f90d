#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace multippi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
    InvalidArgument,
    ParseError,
    EmptyFamily,
    InvalidSubset,
    DuplicateSubset,
    UnknownSubset,
    InvalidTarget,
    NotSymmetric,
    NotPositiveSemidefinite,
    ZeroCostSubset,
    NonpositiveBudget,
    SingularSubmatrix,
    UnreachableTarget,
    Infeasible,
    SolverNotConverged,
    SupportLostAfterRounding,
    NoModelSubsets,
    TooFewSamples,
    NonfiniteEntry,
    CountMismatch,
    MissingSubset,
    DegenerateBatch,
    ExhaustedEmpiricalRows,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);
    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

/// A nonempty set of 1-based variable indices, kept sorted and deduplicated.
class Subset {
public:
    Subset() = default;
    Subset(std::initializer_list<int> indices);
    explicit Subset(std::vector<int> indices);

    /// Parses "1,2,3" (whitespace tolerated).
    static Subset parse(std::string_view text);

    const std::vector<int>& indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    bool contains(int index) const;
    /// Position of `index` inside the subset, or -1.
    int position(int index) const;
    std::string to_string() const;

    auto operator<=>(const Subset&) const = default;

private:
    std::vector<int> indices_;
};

class SubsetFamily {
public:
    SubsetFamily() = default;
    SubsetFamily(int k, std::vector<Subset> subsets);

    int k() const noexcept { return k_; }
    std::size_t size() const noexcept { return subsets_.size(); }
    const Subset& operator[](std::size_t i) const { return subsets_[i]; }
    const std::vector<Subset>& subsets() const noexcept { return subsets_; }
    auto begin() const { return subsets_.begin(); }
    auto end() const { return subsets_.end(); }

    std::optional<std::size_t> find(const Subset& s) const;
    /// Throws UnknownSubset when `s` is not a member.
    std::size_t index_of(const Subset& s) const;

private:
    int k_ = 0;
    std::vector<Subset> subsets_;
};

/// Every nonempty subset of {1..k}, ordered by size then lexicographically.
SubsetFamily full_family(int k);

/// {1..k} together with every nonempty subset of {2..k}.
SubsetFamily model_family(int k);

class TargetSpec {
public:
    explicit TargetSpec(Vector a);
    static TargetSpec unit(int k, int index);

    const Vector& a() const noexcept { return a_; }
    int k() const noexcept { return static_cast<int>(a_.size()); }
    /// 1-based indices with a_i != 0.
    std::vector<int> support() const;

private:
    Vector a_;
};

class CovarianceMatrix {
public:
    /// tolerance < 0 selects the default of 1e-8 * ||sigma||_F.
    explicit CovarianceMatrix(Matrix sigma, double tolerance = -1.0);

    const Matrix& matrix() const noexcept { return sigma_; }
    int k() const noexcept { return static_cast<int>(sigma_.rows()); }
    double tolerance() const noexcept { return tolerance_; }
    double min_eigenvalue() const noexcept { return gamma_min_; }
    double max_eigenvalue() const noexcept { return gamma_max_; }

    /// Principal submatrix on the (1-based) indices of `s`.
    Matrix submatrix(const Subset& s) const;
    /// Inverse of the principal submatrix; SingularSubmatrix when it is not
    /// safely positive definite.
    Matrix submatrix_inverse(const Subset& s) const;
    void require_positive_definite() const;

private:
    Matrix sigma_;
    double tolerance_;
    double gamma_min_;
    double gamma_max_;
};

class CostModel {
public:
    CostModel() = default;
    /// costs is |family| x m; row i holds c_I for family[i].
    CostModel(SubsetFamily family, Matrix costs, Vector budgets);

    const SubsetFamily& family() const noexcept { return family_; }
    const Matrix& costs() const noexcept { return costs_; }
    const Vector& budgets() const noexcept { return budgets_; }
    int rows() const noexcept { return static_cast<int>(budgets_.size()); }
    Vector cost(std::size_t subset) const { return costs_.row(static_cast<Eigen::Index>(subset)).transpose(); }

    CostModel with_budgets(Vector budgets) const;
    /// Spend per budget row for the given counts.
    Vector spend(std::span<const double> counts) const;
    bool affordable(std::span<const double> counts, double rel_tol = 1e-12) const;

private:
    SubsetFamily family_;
    Matrix costs_;
    Vector budgets_;
};

/// Returns `cm` unchanged if every invariant holds.
const CostModel& validate_cost_model(const CostModel& cm);

/// Per-subset sample counts, aligned with a SubsetFamily.
struct Allocation {
    std::vector<std::int64_t> counts;

    static Allocation from_map(const SubsetFamily& family,
                               const std::map<Subset, std::int64_t>& by_subset);
    std::vector<double> as_real() const;
};

struct FractionalAllocation {
    std::vector<double> weights;

    static FractionalAllocation from_map(const SubsetFamily& family,
                                         const std::map<Subset, double>& by_subset);
};

/// lambdas[i] is set exactly when the allocation gives family[i] a positive count.
struct WeightScheme {
    std::vector<std::optional<Vector>> lambdas;

    /// Sum_I P_I^T lambda_I, embedded in R^k.
    Vector combined(const SubsetFamily& family) const;
    /// max_i |combined - a|.
    double unbiasedness_residual(const SubsetFamily& family, const TargetSpec& target) const;
};

struct SampleBatch {
    Subset subset;
    Matrix rows;  // n_I x |I|
};

/// Union of subsets with positive count, as sorted 1-based indices.
std::vector<int> support_union(std::span<const double> counts, const SubsetFamily& family);
std::vector<int> support_union(const Allocation& alloc, const SubsetFamily& family);
std::vector<int> support_union(const FractionalAllocation& alloc, const SubsetFamily& family);

bool covers(const std::vector<int>& indices, const std::vector<int>& required);

}  // namespace multippi
