#include "multippi/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace multippi {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::EmptyFamily: return "EmptyFamily";
        case ErrorCode::InvalidSubset: return "InvalidSubset";
        case ErrorCode::DuplicateSubset: return "DuplicateSubset";
        case ErrorCode::UnknownSubset: return "UnknownSubset";
        case ErrorCode::InvalidTarget: return "InvalidTarget";
        case ErrorCode::NotSymmetric: return "NotSymmetric";
        case ErrorCode::NotPositiveSemidefinite: return "NotPositiveSemidefinite";
        case ErrorCode::ZeroCostSubset: return "ZeroCostSubset";
        case ErrorCode::NonpositiveBudget: return "NonpositiveBudget";
        case ErrorCode::SingularSubmatrix: return "SingularSubmatrix";
        case ErrorCode::UnreachableTarget: return "UnreachableTarget";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::SolverNotConverged: return "SolverNotConverged";
        case ErrorCode::SupportLostAfterRounding: return "SupportLostAfterRounding";
        case ErrorCode::NoModelSubsets: return "NoModelSubsets";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::NonfiniteEntry: return "NonfiniteEntry";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::MissingSubset: return "MissingSubset";
        case ErrorCode::DegenerateBatch: return "DegenerateBatch";
        case ErrorCode::ExhaustedEmpiricalRows: return "ExhaustedEmpiricalRows";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

// ---------------------------------------------------------------- Subset

Subset::Subset(std::initializer_list<int> indices) : Subset(std::vector<int>(indices)) {}

Subset::Subset(std::vector<int> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

Subset Subset::parse(std::string_view text) {
    std::vector<int> out;
    std::string token;
    auto flush = [&] {
        std::string trimmed;
        for (char ch : token)
            if (!std::isspace(static_cast<unsigned char>(ch))) trimmed.push_back(ch);
        token.clear();
        if (trimmed.empty()) throw Error(ErrorCode::ParseError, "empty index in subset '" + std::string(text) + "'");
        std::size_t used = 0;
        int value = 0;
        try {
            value = std::stoi(trimmed, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != trimmed.size())
            throw Error(ErrorCode::ParseError, "bad index '" + trimmed + "' in subset '" + std::string(text) + "'");
        out.push_back(value);
    };
    for (char ch : text) {
        if (ch == ',')
            flush();
        else
            token.push_back(ch);
    }
    flush();
    return Subset(std::move(out));
}

bool Subset::contains(int index) const {
    return std::binary_search(indices_.begin(), indices_.end(), index);
}

int Subset::position(int index) const {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), index);
    if (it == indices_.end() || *it != index) return -1;
    return static_cast<int>(it - indices_.begin());
}

std::string Subset::to_string() const {
    std::string s;
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(indices_[i]);
    }
    return s;
}

// ---------------------------------------------------------- SubsetFamily

SubsetFamily::SubsetFamily(int k, std::vector<Subset> subsets) : k_(k), subsets_(std::move(subsets)) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
    if (subsets_.empty()) throw Error(ErrorCode::EmptyFamily, "subset family is empty");
    std::set<Subset> seen;
    for (const auto& s : subsets_) {
        if (s.empty()) throw Error(ErrorCode::InvalidSubset, "empty subset");
        if (s.indices().front() < 1 || s.indices().back() > k)
            throw Error(ErrorCode::InvalidSubset, "subset {" + s.to_string() + "} has an index outside 1.." + std::to_string(k));
        if (!seen.insert(s).second)
            throw Error(ErrorCode::DuplicateSubset, "subset {" + s.to_string() + "} listed twice");
    }
}

std::optional<std::size_t> SubsetFamily::find(const Subset& s) const {
    for (std::size_t i = 0; i < subsets_.size(); ++i)
        if (subsets_[i] == s) return i;
    return std::nullopt;
}

std::size_t SubsetFamily::index_of(const Subset& s) const {
    auto i = find(s);
    if (!i) throw Error(ErrorCode::UnknownSubset, "subset {" + s.to_string() + "} is not in the family");
    return *i;
}

namespace {

std::vector<Subset> nonempty_subsets(const std::vector<int>& ground) {
    std::vector<Subset> out;
    const std::size_t n = ground.size();
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
        std::vector<int> idx;
        for (std::size_t b = 0; b < n; ++b)
            if (mask & (std::uint64_t{1} << b)) idx.push_back(ground[b]);
        out.emplace_back(std::move(idx));
    }
    std::sort(out.begin(), out.end(), [](const Subset& x, const Subset& y) {
        if (x.size() != y.size()) return x.size() < y.size();
        return x < y;
    });
    return out;
}

}  // namespace

SubsetFamily full_family(int k) {
    if (k < 1 || k > 20) throw Error(ErrorCode::InvalidArgument, "full_family needs 1 <= k <= 20");
    std::vector<int> ground(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) ground[static_cast<std::size_t>(i)] = i + 1;
    return SubsetFamily(k, nonempty_subsets(ground));
}

SubsetFamily model_family(int k) {
    if (k < 2 || k > 20) throw Error(ErrorCode::InvalidArgument, "model_family needs 2 <= k <= 20");
    std::vector<int> all(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i + 1;
    std::vector<Subset> out{Subset(all)};
    std::vector<int> models(all.begin() + 1, all.end());
    for (auto& s : nonempty_subsets(models)) out.push_back(std::move(s));
    return SubsetFamily(k, std::move(out));
}

// ------------------------------------------------------------ TargetSpec

TargetSpec::TargetSpec(Vector a) : a_(std::move(a)) {
    if (a_.size() == 0) throw Error(ErrorCode::InvalidTarget, "target vector is empty");
    if (!a_.allFinite()) throw Error(ErrorCode::InvalidTarget, "target vector has non-finite entries");
    if ((a_.array() == 0.0).all()) throw Error(ErrorCode::InvalidTarget, "target vector is zero");
}

TargetSpec TargetSpec::unit(int k, int index) {
    if (index < 1 || index > k) throw Error(ErrorCode::InvalidTarget, "unit index outside 1..k");
    Vector a = Vector::Zero(k);
    a(index - 1) = 1.0;
    return TargetSpec(std::move(a));
}

std::vector<int> TargetSpec::support() const {
    std::vector<int> s;
    for (Eigen::Index i = 0; i < a_.size(); ++i)
        if (a_(i) != 0.0) s.push_back(static_cast<int>(i) + 1);
    return s;
}

// ------------------------------------------------------ CovarianceMatrix

CovarianceMatrix::CovarianceMatrix(Matrix sigma, double tolerance) : sigma_(std::move(sigma)) {
    if (sigma_.rows() == 0 || sigma_.rows() != sigma_.cols())
        throw Error(ErrorCode::InvalidArgument, "covariance must be a nonempty square matrix");
    if (!sigma_.allFinite()) throw Error(ErrorCode::NonfiniteEntry, "covariance has non-finite entries");
    const double fro = sigma_.norm();
    tolerance_ = tolerance >= 0.0 ? tolerance : 1e-8 * fro;
    const double asym = (sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff();
    if (asym > tolerance_)
        throw Error(ErrorCode::NotSymmetric, "asymmetry " + std::to_string(asym) + " exceeds tolerance");
    sigma_ = 0.5 * (sigma_ + sigma_.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_, Eigen::EigenvaluesOnly);
    gamma_min_ = eig.eigenvalues().minCoeff();
    gamma_max_ = eig.eigenvalues().maxCoeff();
    if (gamma_min_ < -tolerance_)
        throw Error(ErrorCode::NotPositiveSemidefinite, "minimum eigenvalue " + std::to_string(gamma_min_));
}

Matrix CovarianceMatrix::submatrix(const Subset& s) const {
    const auto& idx = s.indices();
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out(i, j) = sigma_(idx[static_cast<std::size_t>(i)] - 1, idx[static_cast<std::size_t>(j)] - 1);
    return out;
}

Matrix CovarianceMatrix::submatrix_inverse(const Subset& s) const {
    Matrix sub = submatrix(s);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sub);
    const double lo = eig.eigenvalues().minCoeff();
    const double floor = std::max(tolerance_, 1e-12 * std::max(gamma_max_, 0.0));
    if (!(lo > floor))
        throw Error(ErrorCode::SingularSubmatrix,
                    "principal submatrix on {" + s.to_string() + "} has minimum eigenvalue " + std::to_string(lo));
    const Vector inv = eig.eigenvalues().cwiseInverse();
    Matrix out = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

void CovarianceMatrix::require_positive_definite() const {
    if (!(gamma_min_ > tolerance_))
        throw Error(ErrorCode::NotPositiveSemidefinite,
                    "covariance must be positive definite; minimum eigenvalue " + std::to_string(gamma_min_));
}

// ------------------------------------------------------------- CostModel

CostModel::CostModel(SubsetFamily family, Matrix costs, Vector budgets)
    : family_(std::move(family)), costs_(std::move(costs)), budgets_(std::move(budgets)) {
    if (static_cast<std::size_t>(costs_.rows()) != family_.size())
        throw Error(ErrorCode::InvalidArgument, "one cost vector per subset is required");
    if (costs_.cols() != budgets_.size())
        throw Error(ErrorCode::InvalidArgument, "cost vectors must have one entry per budget row");
    if (!costs_.allFinite() || !budgets_.allFinite())
        throw Error(ErrorCode::NonfiniteEntry, "costs and budgets must be finite");
}

CostModel CostModel::with_budgets(Vector budgets) const { return CostModel(family_, costs_, std::move(budgets)); }

Vector CostModel::spend(std::span<const double> counts) const {
    if (counts.size() != family_.size()) throw Error(ErrorCode::CountMismatch, "allocation size differs from family size");
    Vector out = Vector::Zero(budgets_.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        out += counts[i] * costs_.row(static_cast<Eigen::Index>(i)).transpose();
    return out;
}

bool CostModel::affordable(std::span<const double> counts, double rel_tol) const {
    const Vector s = spend(counts);
    for (Eigen::Index l = 0; l < s.size(); ++l)
        if (s(l) > budgets_(l) * (1.0 + rel_tol) + rel_tol) return false;
    return true;
}

const CostModel& validate_cost_model(const CostModel& cm) {
    if (cm.family().size() == 0) throw Error(ErrorCode::EmptyFamily, "cost model has no subsets");
    if (cm.rows() == 0) throw Error(ErrorCode::NonpositiveBudget, "cost model has no budget rows");
    for (Eigen::Index l = 0; l < cm.budgets().size(); ++l)
        if (!(cm.budgets()(l) > 0.0))
            throw Error(ErrorCode::NonpositiveBudget, "budget row " + std::to_string(l + 1) + " is not positive");
    for (std::size_t i = 0; i < cm.family().size(); ++i) {
        const auto row = cm.costs().row(static_cast<Eigen::Index>(i));
        if ((row.array() < 0.0).any())
            throw Error(ErrorCode::InvalidArgument, "negative cost for subset {" + cm.family()[i].to_string() + "}");
        if ((row.array() == 0.0).all())
            throw Error(ErrorCode::ZeroCostSubset, "subset {" + cm.family()[i].to_string() + "} costs nothing in every row");
    }
    return cm;
}

// ---------------------------------------------------------- Allocations

Allocation Allocation::from_map(const SubsetFamily& family, const std::map<Subset, std::int64_t>& by_subset) {
    Allocation a{std::vector<std::int64_t>(family.size(), 0)};
    for (const auto& [s, n] : by_subset) {
        if (n < 0) throw Error(ErrorCode::InvalidArgument, "negative count for {" + s.to_string() + "}");
        a.counts[family.index_of(s)] = n;
    }
    return a;
}

std::vector<double> Allocation::as_real() const { return {counts.begin(), counts.end()}; }

FractionalAllocation FractionalAllocation::from_map(const SubsetFamily& family,
                                                    const std::map<Subset, double>& by_subset) {
    FractionalAllocation a{std::vector<double>(family.size(), 0.0)};
    for (const auto& [s, v] : by_subset) {
        if (!(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative weight for {" + s.to_string() + "}");
        a.weights[family.index_of(s)] = v;
    }
    return a;
}

Vector WeightScheme::combined(const SubsetFamily& family) const {
    Vector out = Vector::Zero(family.k());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!lambdas[i]) continue;
        const auto& idx = family[i].indices();
        for (std::size_t p = 0; p < idx.size(); ++p) out(idx[p] - 1) += (*lambdas[i])(static_cast<Eigen::Index>(p));
    }
    return out;
}

double WeightScheme::unbiasedness_residual(const SubsetFamily& family, const TargetSpec& target) const {
    return (combined(family) - target.a()).cwiseAbs().maxCoeff();
}

std::vector<int> support_union(std::span<const double> counts, const SubsetFamily& family) {
    if (counts.size() != family.size())
        throw Error(ErrorCode::UnknownSubset, "allocation is not keyed by the family's subsets");
    std::set<int> u;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] > 0.0) u.insert(family[i].indices().begin(), family[i].indices().end());
    return {u.begin(), u.end()};
}

std::vector<int> support_union(const Allocation& alloc, const SubsetFamily& family) {
    const auto real = alloc.as_real();
    return support_union(std::span<const double>(real), family);
}

std::vector<int> support_union(const FractionalAllocation& alloc, const SubsetFamily& family) {
    return support_union(std::span<const double>(alloc.weights), family);
}

bool covers(const std::vector<int>& indices, const std::vector<int>& required) {
    return std::includes(indices.begin(), indices.end(), required.begin(), required.end());
}

}  // namespace multippi
