#include "multippi/estimators.hpp"

#include "multippi/linalg.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace multippi {

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
    // Acklam's rational approximation followed by one Halley step on erfc.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p > 0.5) return -normal_quantile(1.0 - p);

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
}

/// Projections lambda . x for every sample of one subset.
struct Term {
    Subset subset;
    std::vector<double> proj;
    bool weighted = true;  // lambda != 0
};

double term_mean(const Term& t) {
    double s = 0.0;
    for (double v : t.proj) s += v;
    return s / static_cast<double>(t.proj.size());
}

double point_from_terms(const std::vector<Term>& terms) {
    double total = 0.0;
    bool first = true;
    for (const auto& t : terms) {
        const double m = term_mean(t);
        total = first ? m : total + m;
        first = false;
    }
    return total;
}

void set_interval(EstimateReport& r) {
    const double z = normal_quantile(1.0 - r.alpha / 2.0);
    const double half = z * std::sqrt(r.variance);
    r.lo = r.point - half;
    r.hi = r.point + half;
}

EstimateReport report_from_terms(const std::vector<Term>& terms, double alpha) {
    check_alpha(alpha);
    EstimateReport r;
    r.alpha = alpha;
    r.point = point_from_terms(terms);
    for (const auto& t : terms) {
        const auto n = static_cast<std::int64_t>(t.proj.size());
        const double mean = term_mean(t);
        double var = 0.0;
        if (n >= 2) {
            double ss = 0.0;
            for (double v : t.proj) ss += (v - mean) * (v - mean);
            var = ss / static_cast<double>(n - 1);
        } else if (t.weighted) {
            throw Error(ErrorCode::DegenerateBatch,
                        "subset {" + t.subset.to_string() + "} has " + std::to_string(n) + " sample(s); need 2");
        }
        r.variance += var / static_cast<double>(n);
        r.per_subset.push_back({t.subset, n, mean, var});
        r.allocation.emplace_back(t.subset, n);
    }
    set_interval(r);
    return r;
}

double project(const Vector& lambda, const Matrix& rows, Eigen::Index j) {
    double acc = lambda(0) * rows(j, 0);
    for (Eigen::Index t = 1; t < lambda.size(); ++t) acc += lambda(t) * rows(j, t);
    return acc;
}

std::vector<Term> multippi_terms(const std::vector<SampleBatch>& batches, const SubsetFamily& family,
                                 const Allocation& alloc, const WeightScheme& weights) {
    if (alloc.counts.size() != family.size()) throw Error(ErrorCode::UnknownSubset, "allocation is not keyed by the family");
    if (weights.lambdas.size() != family.size()) throw Error(ErrorCode::UnknownSubset, "weights are not keyed by the family");
    std::map<Subset, const SampleBatch*> by_subset;
    for (const auto& b : batches) {
        const auto i = family.index_of(b.subset);
        if (!by_subset.emplace(b.subset, &b).second)
            throw Error(ErrorCode::InvalidArgument, "two batches for subset {" + b.subset.to_string() + "}");
        if (b.rows.rows() != alloc.counts[i])
            throw Error(ErrorCode::CountMismatch, "batch {" + b.subset.to_string() + "} has " +
                                                      std::to_string(b.rows.rows()) + " rows, allocation says " +
                                                      std::to_string(alloc.counts[i]));
        if (b.rows.rows() > 0 && b.rows.cols() != static_cast<Eigen::Index>(b.subset.size()))
            throw Error(ErrorCode::InvalidArgument, "batch {" + b.subset.to_string() + "} has the wrong width");
        if (!b.rows.allFinite()) throw Error(ErrorCode::NonfiniteEntry, "batch {" + b.subset.to_string() + "}");
    }
    std::vector<Term> terms;
    for (std::size_t i = 0; i < family.size(); ++i) {
        if (alloc.counts[i] < 0) throw Error(ErrorCode::InvalidArgument, "negative count");
        if (alloc.counts[i] == 0) {
            if (weights.lambdas[i])
                throw Error(ErrorCode::InvalidArgument, "weights given for unsampled subset {" + family[i].to_string() + "}");
            continue;
        }
        const auto it = by_subset.find(family[i]);
        if (it == by_subset.end())
            throw Error(ErrorCode::MissingSubset, "no batch for subset {" + family[i].to_string() + "}");
        if (!weights.lambdas[i])
            throw Error(ErrorCode::InvalidArgument, "no weights for subset {" + family[i].to_string() + "}");
        const Vector& lambda = *weights.lambdas[i];
        if (lambda.size() != static_cast<Eigen::Index>(family[i].size()))
            throw Error(ErrorCode::InvalidArgument, "weights for {" + family[i].to_string() + "} have the wrong length");
        Term t{family[i], {}, !lambda.isZero(0.0)};
        const Matrix& rows = it->second->rows;
        t.proj.reserve(static_cast<std::size_t>(rows.rows()));
        for (Eigen::Index j = 0; j < rows.rows(); ++j) t.proj.push_back(project(lambda, rows, j));
        terms.push_back(std::move(t));
    }
    if (terms.empty()) throw Error(ErrorCode::InvalidArgument, "allocation has no positive counts");
    return terms;
}

double sample_cov(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = x.mean(), my = y.mean();
    return ((x.array() - mx) * (y.array() - my)).sum() / (n - 1.0);
}

void require_rows(Eigen::Index n, const char* what) {
    if (n < 2) throw Error(ErrorCode::DegenerateBatch, std::string(what) + " needs at least 2 rows");
}

}  // namespace

double multippi_point(const std::vector<SampleBatch>& batches, const SubsetFamily& family, const Allocation& alloc,
                      const WeightScheme& weights) {
    return point_from_terms(multippi_terms(batches, family, alloc, weights));
}

EstimateReport confidence_interval(const std::vector<SampleBatch>& batches, const SubsetFamily& family,
                                   const Allocation& alloc, const WeightScheme& weights, double alpha) {
    return report_from_terms(multippi_terms(batches, family, alloc, weights), alpha);
}

BatchSummary summarize(const SampleBatch& batch) {
    BatchSummary s{batch.subset, batch.rows.rows(), {}, {}};
    const auto d = static_cast<Eigen::Index>(batch.subset.size());
    if (s.n == 0) {
        s.mean = Vector::Zero(d);
        s.cov = Matrix::Zero(d, d);
        return s;
    }
    s.mean = batch.rows.colwise().mean().transpose();
    s.cov = s.n >= 2 ? empirical_covariance(batch.rows, Divisor::NMinusOne).matrix() : Matrix::Zero(d, d);
    return s;
}

EstimateReport estimate_from_summaries(const std::vector<BatchSummary>& summaries, const SubsetFamily& family,
                                       const Allocation& alloc, const WeightScheme& weights, double alpha) {
    check_alpha(alpha);
    std::map<Subset, const BatchSummary*> by_subset;
    for (const auto& s : summaries) {
        const auto i = family.index_of(s.subset);
        if (s.n != alloc.counts[i])
            throw Error(ErrorCode::CountMismatch, "summary {" + s.subset.to_string() + "} disagrees with the allocation");
        by_subset.emplace(s.subset, &s);
    }
    EstimateReport r;
    r.alpha = alpha;
    bool first = true;
    for (std::size_t i = 0; i < family.size(); ++i) {
        if (alloc.counts[i] == 0) continue;
        const auto it = by_subset.find(family[i]);
        if (it == by_subset.end())
            throw Error(ErrorCode::MissingSubset, "no batch for subset {" + family[i].to_string() + "}");
        if (!weights.lambdas[i])
            throw Error(ErrorCode::InvalidArgument, "no weights for subset {" + family[i].to_string() + "}");
        const Vector& lambda = *weights.lambdas[i];
        const BatchSummary& s = *it->second;
        const double mean = lambda.dot(s.mean);
        double var = 0.0;
        if (s.n >= 2) {
            var = std::max(0.0, lambda.dot(s.cov * lambda));
        } else if (!lambda.isZero(0.0)) {
            throw Error(ErrorCode::DegenerateBatch, "subset {" + s.subset.to_string() + "} has 1 sample; need 2");
        }
        r.point = first ? mean : r.point + mean;
        first = false;
        r.variance += var / static_cast<double>(s.n);
        r.per_subset.push_back({s.subset, s.n, mean, var});
        r.allocation.emplace_back(s.subset, s.n);
    }
    if (first) throw Error(ErrorCode::InvalidArgument, "allocation has no positive counts");
    set_interval(r);
    return r;
}

// ----------------------------------------------------------- baselines

EstimateReport classical_estimate(const Vector& x1, double alpha) {
    require_rows(x1.size(), "classical estimate");
    Term t{Subset{1}, std::vector<double>(x1.data(), x1.data() + x1.size())};
    return report_from_terms({t}, alpha);
}

EstimateReport ppi_estimate(const Matrix& labeled, const Vector& unlabeled, double alpha) {
    if (labeled.cols() != 2) throw Error(ErrorCode::InvalidArgument, "PPI needs labeled rows (Y, f)");
    require_rows(labeled.rows(), "PPI labeled batch");
    require_rows(unlabeled.size(), "PPI unlabeled batch");
    Term rect{Subset{1, 2}, {}};
    for (Eigen::Index j = 0; j < labeled.rows(); ++j) rect.proj.push_back(labeled(j, 0) - labeled(j, 1));
    Term unl{Subset{2}, std::vector<double>(unlabeled.data(), unlabeled.data() + unlabeled.size())};
    return report_from_terms({rect, unl}, alpha);
}

EstimateReport ppi_pp_scalar(const Matrix& labeled, const Vector& unlabeled, double alpha, std::optional<double> lambda) {
    if (labeled.cols() != 2) throw Error(ErrorCode::InvalidArgument, "PPI++ needs labeled rows (Y, f)");
    require_rows(labeled.rows(), "PPI++ labeled batch");
    require_rows(unlabeled.size(), "PPI++ unlabeled batch");
    const double n = static_cast<double>(labeled.rows());
    const double big_n = static_cast<double>(unlabeled.size());
    double l;
    if (lambda) {
        l = *lambda;
    } else {
        const double var_f = sample_cov(labeled.col(1), labeled.col(1));
        l = var_f > 0.0 ? (big_n / (n + big_n)) * sample_cov(labeled.col(0), labeled.col(1)) / var_f : 0.0;
    }
    Term rect{Subset{1, 2}, {}};
    for (Eigen::Index j = 0; j < labeled.rows(); ++j) rect.proj.push_back(labeled(j, 0) - l * labeled(j, 1));
    Term unl{Subset{2}, {}, l != 0.0};
    for (Eigen::Index j = 0; j < unlabeled.size(); ++j) unl.proj.push_back(l * unlabeled(j));
    auto r = report_from_terms({rect, unl}, alpha);
    r.tuning = Vector::Constant(1, l);
    return r;
}

EstimateReport ppi_pp_vector(const Matrix& labeled, const Matrix& unlabeled, double alpha, std::optional<Vector> lambda) {
    const Eigen::Index p = labeled.cols() - 1;
    if (p < 1 || unlabeled.cols() != p)
        throw Error(ErrorCode::InvalidArgument, "PPI++ vector needs labeled n x k and unlabeled N x (k-1)");
    require_rows(labeled.rows(), "PPI++ vector labeled batch");
    require_rows(unlabeled.rows(), "PPI++ vector unlabeled batch");
    const double n = static_cast<double>(labeled.rows());
    const double big_n = static_cast<double>(unlabeled.rows());
    Vector l;
    if (lambda) {
        if (lambda->size() != p) throw Error(ErrorCode::InvalidArgument, "lambda has the wrong length");
        l = *lambda;
    } else {
        Matrix s22(p, p);
        Vector c(p);
        for (Eigen::Index u = 0; u < p; ++u) {
            c(u) = sample_cov(labeled.col(u + 1), labeled.col(0));
            for (Eigen::Index v = 0; v < p; ++v) s22(u, v) = sample_cov(labeled.col(u + 1), labeled.col(v + 1));
        }
        l = (big_n / (n + big_n)) * (linalg::pseudo_inverse_symmetric(s22) * c);
    }
    std::vector<int> all, proxies;
    for (int i = 1; i <= p + 1; ++i) all.push_back(i);
    for (int i = 2; i <= p + 1; ++i) proxies.push_back(i);
    Term rect{Subset(all), {}};
    for (Eigen::Index j = 0; j < labeled.rows(); ++j) {
        double v = labeled(j, 0);
        for (Eigen::Index t = 0; t < p; ++t) v -= l(t) * labeled(j, t + 1);
        rect.proj.push_back(v);
    }
    Term unl{Subset(proxies), {}, !l.isZero(0.0)};
    for (Eigen::Index j = 0; j < unlabeled.rows(); ++j) {
        double v = l(0) * unlabeled(j, 0);
        for (Eigen::Index t = 1; t < p; ++t) v += l(t) * unlabeled(j, t);
        unl.proj.push_back(v);
    }
    auto r = report_from_terms({rect, unl}, alpha);
    r.tuning = l;
    return r;
}

EstimateReport cascade_estimate(const Matrix& b12, const Matrix& b23, const Vector& b3, double lambda,
                                double lambda_prime, double alpha) {
    if (b12.cols() != 2 || b23.cols() != 2) throw Error(ErrorCode::InvalidArgument, "cascade batches need two columns");
    require_rows(b12.rows(), "cascade {1,2} batch");
    std::vector<Term> terms;
    Term t12{Subset{1, 2}, {}};
    for (Eigen::Index j = 0; j < b12.rows(); ++j) t12.proj.push_back(b12(j, 0) - lambda * b12(j, 1));
    terms.push_back(std::move(t12));
    if (b23.rows() > 0) {
        Term t23{Subset{2, 3}, {}, lambda != 0.0 || lambda_prime != 0.0};
        for (Eigen::Index j = 0; j < b23.rows(); ++j) t23.proj.push_back(lambda * b23(j, 0) - lambda_prime * b23(j, 1));
        terms.push_back(std::move(t23));
    }
    if (b3.size() > 0) {
        Term t3{Subset{3}, {}, lambda_prime != 0.0};
        for (Eigen::Index j = 0; j < b3.size(); ++j) t3.proj.push_back(lambda_prime * b3(j));
        terms.push_back(std::move(t3));
    }
    auto r = report_from_terms(terms, alpha);
    r.tuning = Vector{{lambda, lambda_prime}};
    return r;
}

SubsetFamily cascade_family() { return SubsetFamily(3, {Subset{1, 2}, Subset{2, 3}, Subset{3}}); }

std::pair<double, double> cascade_tuning(const CovarianceMatrix& sigma, const std::vector<double>& counts) {
    if (sigma.k() != 3) throw Error(ErrorCode::InvalidArgument, "the cascade is defined for k = 3");
    const auto family = cascade_family();
    const auto w = optimal_weights(sigma, TargetSpec::unit(3, 1), family, counts);
    const double lambda = w.lambdas[0] ? -(*w.lambdas[0])(1) : 0.0;
    double lambda_prime = 0.0;
    if (w.lambdas[2]) lambda_prime = (*w.lambdas[2])(0);
    else if (w.lambdas[1]) lambda_prime = -(*w.lambdas[1])(1);
    return {lambda, lambda_prime};
}

// ------------------------------------------------------------ pipeline

FamilyKind parse_family_kind(const std::string& name) {
    if (name == "full") return FamilyKind::Full;
    if (name == "restricted") return FamilyKind::Restricted;
    throw Error(ErrorCode::InvalidArgument, "unknown family '" + name + "' (full | restricted)");
}

std::string to_string(FamilyKind kind) { return kind == FamilyKind::Full ? "full" : "restricted"; }

SubsetFamily pipeline_family(int k, FamilyKind kind) {
    return kind == FamilyKind::Full ? model_family(k) : restricted_family(k);
}

CostModel labeled_cap_model(const SubsetFamily& family, const std::vector<double>& model_costs, double money_budget,
                            std::int64_t labeled_count) {
    std::vector<int> all(static_cast<std::size_t>(family.k()));
    for (int i = 0; i < family.k(); ++i) all[static_cast<std::size_t>(i)] = i + 1;
    const Subset full(all);
    const std::size_t full_index = family.index_of(full);
    if (model_costs.size() + 1 != family.size())
        throw Error(ErrorCode::InvalidArgument, "need one money cost per subset other than the full one");
    if (labeled_count < 1) throw Error(ErrorCode::NonpositiveBudget, "labeled cap must be positive");
    if (money_budget < 0.0) throw Error(ErrorCode::NonpositiveBudget, "money budget is negative");
    if (money_budget == 0.0)
        return CostModel(SubsetFamily(family.k(), {full}), Matrix::Ones(1, 1),
                         Vector::Constant(1, static_cast<double>(labeled_count)));
    Matrix costs = Matrix::Zero(static_cast<Eigen::Index>(family.size()), 2);
    std::size_t next = 0;
    for (std::size_t i = 0; i < family.size(); ++i) {
        if (i == full_index) costs(static_cast<Eigen::Index>(i), 1) = 1.0;
        else costs(static_cast<Eigen::Index>(i), 0) = model_costs[next++];
    }
    return CostModel(family, costs, Vector{{money_budget, static_cast<double>(labeled_count)}});
}

PipelineResult pipeline_run(const Matrix& labeled, const TargetSpec& target, const PipelineConfig& config,
                            const BatchSource& source) {
    check_alpha(config.alpha);
    const auto& cm = config.cost_model;
    const auto& family = cm.family();
    if (labeled.rows() < 2) throw Error(ErrorCode::TooFewSamples, "pipeline needs at least 2 labeled rows");
    if (labeled.cols() != family.k()) throw Error(ErrorCode::InvalidArgument, "labeled rows must have k columns");
    std::vector<int> all(static_cast<std::size_t>(family.k()));
    for (int i = 0; i < family.k(); ++i) all[static_cast<std::size_t>(i)] = i + 1;
    const Subset full(all);
    const auto full_index = family.find(full);
    if (!full_index) throw Error(ErrorCode::MissingSubset, "the cost model has no full subset {" + full.to_string() + "}");

    CovarianceMatrix sigma_hat = estimate_covariance(labeled, config.covariance_method);
    AllocationPlan plan = solve_allocation(sigma_hat, target, cm, config.solver);
    const std::int64_t n_full = plan.rounded.counts[*full_index];
    if (n_full > labeled.rows())
        throw Error(ErrorCode::InvalidArgument, "plan asks for " + std::to_string(n_full) + " labeled rows but only " +
                                                    std::to_string(labeled.rows()) + " exist; add a labeled cap row");

    std::vector<SampleBatch> batches;
    for (std::size_t i = 0; i < family.size(); ++i) {
        const auto n = plan.rounded.counts[i];
        if (n == 0) continue;
        if (i == *full_index) {
            batches.push_back({full, labeled.topRows(n)});
            continue;
        }
        Matrix rows = source(family[i], n);
        if (rows.rows() != n || rows.cols() != static_cast<Eigen::Index>(family[i].size()))
            throw Error(ErrorCode::CountMismatch, "source returned the wrong shape for {" + family[i].to_string() + "}");
        batches.push_back({family[i], std::move(rows)});
    }
    EstimateReport report = confidence_interval(batches, family, plan.rounded, plan.weights, config.alpha);
    report.spend = plan.spend;
    return PipelineResult{std::move(sigma_hat), std::move(plan), std::move(report)};
}

}  // namespace multippi
