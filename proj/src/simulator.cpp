#include "multippi/simulator.hpp"

#include "multippi/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace multippi {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kLabeledStream = 0;
constexpr std::uint64_t kPoolStream = 1;

std::uint64_t subset_stream(const Subset& s) {
    std::uint64_t mask = 0;
    for (int i : s.indices()) mask |= std::uint64_t{1} << (i - 1);
    return 2 + mask;
}

Subset full_subset(int k) {
    std::vector<int> all(static_cast<std::size_t>(k));
    std::iota(all.begin(), all.end(), 1);
    return Subset(all);
}

/// Symmetric square root of a PSD block (safe when the block is singular).
Matrix psd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Matrix select_columns(const Matrix& rows, const Subset& s) {
    Matrix out(rows.rows(), static_cast<Eigen::Index>(s.size()));
    for (std::size_t t = 0; t < s.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = rows.col(s.indices()[t] - 1);
    return out;
}

std::int64_t affordable_count(double budget, double cost) {
    const double v = budget / cost;
    return static_cast<std::int64_t>(std::floor(v + 1e-9 * std::max(1.0, v)));
}

}  // namespace

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ trial) ^ stream));
}

// ------------------------------------------------------------ population

PopulationSource PopulationSource::gaussian(Vector mu, Matrix sigma) {
    if (mu.size() < 1 || sigma.rows() != mu.size() || sigma.cols() != mu.size())
        throw Error(ErrorCode::InvalidArgument, "gaussian source needs mu of length k and a k x k covariance");
    CovarianceMatrix checked(sigma);  // symmetry / PSD
    PopulationSource p;
    p.kind_ = Kind::Gaussian;
    p.mu_ = std::move(mu);
    p.sigma_ = checked.matrix();
    return p;
}

PopulationSource PopulationSource::empirical(Matrix rows, bool with_replacement) {
    if (rows.rows() < 2) throw Error(ErrorCode::TooFewSamples, "empirical source needs at least 2 rows");
    if (!rows.allFinite()) throw Error(ErrorCode::NonfiniteEntry, "empirical source has non-finite entries");
    PopulationSource p;
    p.kind_ = Kind::Empirical;
    p.mu_ = rows.colwise().mean().transpose();
    p.sigma_ = empirical_covariance(rows, Divisor::N).matrix();
    p.rows_ = std::move(rows);
    p.with_replacement_ = with_replacement;
    return p;
}

double PopulationSource::theta_star(const TargetSpec& target) const {
    if (target.k() != k()) throw Error(ErrorCode::InvalidArgument, "target length differs from the source's k");
    return target.a().dot(mu_);
}

Matrix PopulationSource::draw(const Subset& s, std::int64_t n, std::mt19937_64& rng) const {
    const auto d = static_cast<Eigen::Index>(s.size());
    Matrix out(n, d);
    if (kind_ == Kind::Gaussian) {
        std::normal_distribution<double> n01;
        Matrix z(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) z(i, j) = n01(rng);
        Vector mu_s(d);
        for (Eigen::Index j = 0; j < d; ++j) mu_s(j) = mu_(s.indices()[static_cast<std::size_t>(j)] - 1);
        Matrix sub(d, d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                sub(i, j) = sigma_(s.indices()[static_cast<std::size_t>(i)] - 1, s.indices()[static_cast<std::size_t>(j)] - 1);
        out = z * psd_sqrt(sub);
        out.rowwise() += mu_s.transpose();
        return out;
    }
    if (!with_replacement_)
        throw Error(ErrorCode::InvalidArgument, "without-replacement sampling draws from a trial pool");
    std::uniform_int_distribution<Eigen::Index> pick(0, rows_.rows() - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index r = pick(rng);
        for (Eigen::Index j = 0; j < d; ++j) out(i, j) = rows_(r, s.indices()[static_cast<std::size_t>(j)] - 1);
    }
    return out;
}

Matrix PopulationSource::draw_from_pool(const Subset& s, std::int64_t n, const std::vector<std::int64_t>& pool,
                                        std::size_t& offset) const {
    if (offset + static_cast<std::size_t>(n) > pool.size())
        throw Error(ErrorCode::ExhaustedEmpiricalRows, "need " + std::to_string(offset + static_cast<std::size_t>(n)) +
                                                           " distinct rows, dataset has " + std::to_string(pool.size()));
    const auto d = static_cast<Eigen::Index>(s.size());
    Matrix out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(pool[offset + static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < d; ++j) out(i, j) = rows_(r, s.indices()[static_cast<std::size_t>(j)] - 1);
    }
    offset += static_cast<std::size_t>(n);
    return out;
}

BatchSummary PopulationSource::draw_summary(const Subset& s, std::int64_t n, std::mt19937_64& rng, bool fast) const {
    const auto d = static_cast<Eigen::Index>(s.size());
    if (!fast || kind_ != Kind::Gaussian || n < d + 1) return summarize({s, draw(s, n, rng)});
    // Mean ~ N(mu_I, Sigma_I / n); (n-1) S ~ Wishart(Sigma_I, n-1) via the Bartlett factor.
    Matrix sub(d, d);
    Vector mu_s(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        mu_s(i) = mu_(s.indices()[static_cast<std::size_t>(i)] - 1);
        for (Eigen::Index j = 0; j < d; ++j)
            sub(i, j) = sigma_(s.indices()[static_cast<std::size_t>(i)] - 1, s.indices()[static_cast<std::size_t>(j)] - 1);
    }
    const Matrix root = psd_sqrt(sub);
    std::normal_distribution<double> n01;
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = n01(rng);
    const double m = static_cast<double>(n - 1);
    Matrix a = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        std::chi_squared_distribution<double> chi(m - static_cast<double>(i));
        a(i, i) = std::sqrt(chi(rng));
        for (Eigen::Index j = 0; j < i; ++j) a(i, j) = n01(rng);
    }
    const Matrix ra = root * a;
    BatchSummary out{s, n, mu_s + root * z / std::sqrt(static_cast<double>(n)), (ra * ra.transpose()) / m};
    return out;
}

// --------------------------------------------------------------- costs

CostModel cost_additive(const std::vector<double>& per_model_costs) {
    const int models = static_cast<int>(per_model_costs.size());
    if (models < 1) throw Error(ErrorCode::InvalidArgument, "need at least one model cost");
    std::vector<Subset> subsets;
    std::vector<double> costs;
    for (const auto& s : full_family(models)) {
        std::vector<int> shifted;
        double c = 0.0;
        for (int i : s.indices()) {
            shifted.push_back(i + 1);
            c += per_model_costs[static_cast<std::size_t>(i - 1)];
        }
        subsets.emplace_back(shifted);
        costs.push_back(c);
    }
    Matrix cm(static_cast<Eigen::Index>(costs.size()), 1);
    for (std::size_t i = 0; i < costs.size(); ++i) cm(static_cast<Eigen::Index>(i), 0) = costs[i];
    CostModel out(SubsetFamily(models + 1, subsets), cm, Vector::Ones(1));
    validate_cost_model(out);
    return out;
}

CostModel cost_cascading(double input_rate, double output_rate, const std::vector<double>& tiers) {
    const int models = static_cast<int>(tiers.size());
    if (models < 1) throw Error(ErrorCode::InvalidArgument, "need at least one tier");
    if (input_rate < 0.0 || output_rate < 0.0) throw Error(ErrorCode::InvalidArgument, "rates must be nonnegative");
    std::vector<Subset> subsets;
    std::vector<double> costs;
    for (const auto& s : full_family(models)) {
        std::vector<int> shifted;
        double top = 0.0, total = 0.0;
        for (int i : s.indices()) {
            shifted.push_back(i + 1);
            top = std::max(top, tiers[static_cast<std::size_t>(i - 1)]);
            total += tiers[static_cast<std::size_t>(i - 1)];
        }
        subsets.emplace_back(shifted);
        costs.push_back(output_rate * top + input_rate * total);
    }
    Matrix cm(static_cast<Eigen::Index>(costs.size()), 1);
    for (std::size_t i = 0; i < costs.size(); ++i) cm(static_cast<Eigen::Index>(i), 0) = costs[i];
    CostModel out(SubsetFamily(models + 1, subsets), cm, Vector::Ones(1));
    validate_cost_model(out);
    return out;
}

// --------------------------------------------------------------- trials

TrialBatches draw_trial(const PopulationSource& source, const SubsetFamily& family, const Allocation& alloc,
                        std::int64_t n_labeled, std::uint64_t seed) {
    if (family.k() != source.k()) throw Error(ErrorCode::InvalidArgument, "family and source disagree on k");
    if (alloc.counts.size() != family.size()) throw Error(ErrorCode::UnknownSubset, "allocation is not keyed by the family");
    const Subset full = full_subset(source.k());
    TrialBatches out;
    std::vector<std::int64_t> pool;
    std::size_t offset = 0;
    const bool pooled = source.kind() == PopulationSource::Kind::Empirical && !source.with_replacement();
    if (pooled) {
        pool.resize(static_cast<std::size_t>(source.rows().rows()));
        std::iota(pool.begin(), pool.end(), 0);
        auto rng = stream_rng(seed, 0, kPoolStream);
        std::shuffle(pool.begin(), pool.end(), rng);
        out.labeled = source.draw_from_pool(full, n_labeled, pool, offset);
    } else {
        auto rng = stream_rng(seed, 0, kLabeledStream);
        out.labeled = source.draw(full, n_labeled, rng);
    }
    for (std::size_t i = 0; i < family.size(); ++i) {
        const auto n = alloc.counts[i];
        if (n == 0) continue;
        if (family[i] == full) {
            if (n > n_labeled)
                throw Error(ErrorCode::InvalidArgument, "allocation asks for more labeled rows than were drawn");
            out.batches.push_back({full, out.labeled.topRows(n)});
        } else if (pooled) {
            out.batches.push_back({family[i], source.draw_from_pool(family[i], n, pool, offset)});
        } else {
            auto rng = stream_rng(seed, 0, subset_stream(family[i]));
            out.batches.push_back({family[i], source.draw(family[i], n, rng)});
        }
    }
    return out;
}

Method parse_method(const std::string& text) {
    Method m{MethodKind::Classical, 0, text};
    auto proxy_of = [&](const std::string& prefix) {
        const std::string rest = text.substr(prefix.size());
        std::size_t used = 0;
        int j = 0;
        try {
            j = std::stoi(rest, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != rest.size() || rest.empty() || j < 2)
            throw Error(ErrorCode::InvalidArgument, "method '" + text + "' needs a proxy index >= 2");
        return j;
    };
    if (text == "classical") return m;
    if (text == "ppi++vector") return {MethodKind::PpiPlusPlusVector, 0, text};
    if (text == "cascade") return {MethodKind::Cascade, 0, text};
    if (text == "multippi") return {MethodKind::MultiPPI, 0, text};
    if (text == "multippi_restricted") return {MethodKind::MultiPPIRestricted, 0, text};
    if (text.rfind("ppi++:", 0) == 0) return {MethodKind::PpiPlusPlus, proxy_of("ppi++:"), text};
    if (text.rfind("ppi:", 0) == 0) return {MethodKind::Ppi, proxy_of("ppi:"), text};
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + text + "'");
}

// ------------------------------------------------------------ the grid

namespace {

struct Outcome {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct Accumulator {
    std::int64_t covered = 0;
    double sq_err = 0.0;
    double err = 0.0;
    double sq_width = 0.0;
    double width_ratio = 0.0;  // sum of per-trial squared-width ratios
};

class TrialContext {
public:
    TrialContext(const ExperimentConfig& cfg, std::uint64_t trial) : cfg_(cfg), trial_(trial) {
        const auto& src = cfg.source;
        const Subset full = full_subset(src.k());
        pooled_ = src.kind() == PopulationSource::Kind::Empirical && !src.with_replacement();
        if (pooled_) {
            pool_.resize(static_cast<std::size_t>(src.rows().rows()));
            std::iota(pool_.begin(), pool_.end(), 0);
            auto rng = stream_rng(cfg.seed, trial, kPoolStream);
            std::shuffle(pool_.begin(), pool_.end(), rng);
            std::size_t offset = 0;
            labeled_ = src.draw_from_pool(full, cfg.n_labeled, pool_, offset);
        } else {
            auto rng = stream_rng(cfg.seed, trial, kLabeledStream);
            labeled_ = src.draw(full, cfg.n_labeled, rng);
        }
    }

    const Matrix& labeled() const { return labeled_; }

    const CovarianceMatrix& sigma_hat() {
        if (!sigma_hat_) sigma_hat_ = estimate_covariance(labeled_, cfg_.covariance_method);
        return *sigma_hat_;
    }

    /// Starts a fresh estimator evaluation (resets the without-replacement cursor).
    void begin() { offset_ = static_cast<std::size_t>(cfg_.n_labeled); }

    BatchSummary fresh(const Subset& s, std::int64_t n) {
        if (pooled_) return summarize({s, cfg_.source.draw_from_pool(s, n, pool_, offset_)});
        auto rng = stream_rng(cfg_.seed, trial_, subset_stream(s));
        return cfg_.source.draw_summary(s, n, rng, cfg_.fast_gaussian);
    }

    /// Subsets holding index 1 are served by the first n labeled rows.
    Outcome evaluate(const SubsetFamily& family, const Allocation& alloc, const WeightScheme& weights) {
        begin();
        std::vector<BatchSummary> sums;
        for (std::size_t i = 0; i < family.size(); ++i) {
            const auto n = alloc.counts[i];
            if (n == 0) continue;
            if (family[i].contains(1)) {
                if (n > labeled_.rows()) throw Error(ErrorCode::InvalidArgument, "not enough labeled rows");
                sums.push_back(summarize({family[i], select_columns(labeled_.topRows(n), family[i])}));
            } else {
                sums.push_back(fresh(family[i], n));
            }
        }
        const auto r = estimate_from_summaries(sums, family, alloc, weights, cfg_.alpha);
        return {r.point, r.lo, r.hi};
    }

private:
    const ExperimentConfig& cfg_;
    std::uint64_t trial_;
    Matrix labeled_;
    std::optional<CovarianceMatrix> sigma_hat_;
    bool pooled_ = false;
    std::vector<std::int64_t> pool_;
    std::size_t offset_ = 0;
};

double money_cost(const CostModel& model_costs, const Subset& s) {
    const auto i = model_costs.family().find(s);
    if (!i) throw Error(ErrorCode::MissingSubset, "no cost for model subset {" + s.to_string() + "}");
    return model_costs.costs()(static_cast<Eigen::Index>(*i), 0);
}

double sample_cov(const Matrix& rows, Eigen::Index a, Eigen::Index b) {
    const double ma = rows.col(a).mean(), mb = rows.col(b).mean();
    return ((rows.col(a).array() - ma) * (rows.col(b).array() - mb)).sum() / static_cast<double>(rows.rows() - 1);
}

/// Family with the labeled subset and model subsets; row 0 money, row 1 labeled cap.
CostModel capped(const SubsetFamily& family, const CostModel& model_costs, double budget, std::int64_t cap) {
    Matrix c = Matrix::Zero(static_cast<Eigen::Index>(family.size()), 2);
    for (std::size_t i = 0; i < family.size(); ++i) {
        if (family[i].contains(1)) c(static_cast<Eigen::Index>(i), 1) = 1.0;
        else c(static_cast<Eigen::Index>(i), 0) = money_cost(model_costs, family[i]);
    }
    return CostModel(family, c, Vector{{budget, static_cast<double>(cap)}});
}

Outcome run_method(const Method& m, const ExperimentConfig& cfg, TrialContext& ctx, double budget,
                   const Outcome& classical) {
    const int k = cfg.source.k();
    const auto n_lab = cfg.n_labeled;
    const TargetSpec e1 = TargetSpec::unit(k, 1);

    auto solve_and_evaluate = [&](const SubsetFamily& family) {
        // Without money only the labeled subset is affordable.
        std::vector<Subset> labeled_only;
        for (const auto& s : family)
            if (s.contains(1)) labeled_only.push_back(s);
        const auto& target = cfg.target ? *cfg.target : e1;
        if (budget <= 0.0) {
            const SubsetFamily f(k, labeled_only);
            const CostModel cm(f, Matrix::Ones(static_cast<Eigen::Index>(f.size()), 1),
                               Vector::Constant(1, static_cast<double>(n_lab)));
            const auto plan = solve_allocation(ctx.sigma_hat(), target, cm, cfg.solver);
            return ctx.evaluate(f, plan.rounded, plan.weights);
        }
        // A fresh subset rounded to a single sample has no variance estimate: drop it and re-solve.
        std::vector<Subset> members(family.begin(), family.end());
        for (;;) {
            const SubsetFamily f(k, members);
            const auto plan = solve_allocation(ctx.sigma_hat(), target, capped(f, cfg.model_costs, budget, n_lab), cfg.solver);
            std::vector<Subset> kept;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const auto& l = plan.weights.lambdas[i];
                const bool singleton = plan.rounded.counts[i] == 1 && l && l->cwiseAbs().maxCoeff() > 0.0;
                if (!singleton || f[i].contains(1)) kept.push_back(f[i]);
            }
            if (kept.size() == f.size()) return ctx.evaluate(f, plan.rounded, plan.weights);
            members = std::move(kept);
        }
    };

    switch (m.kind) {
        case MethodKind::Classical:
            return classical;
        case MethodKind::Ppi:
        case MethodKind::PpiPlusPlus: {
            const int j = m.proxy;
            if (j > k) throw Error(ErrorCode::InvalidArgument, "method '" + m.label + "' names a missing proxy");
            const SubsetFamily family(k, {Subset{1, j}, Subset{j}});
            if (m.kind == MethodKind::PpiPlusPlus && cfg.ppi_policy == PpiBudgetPolicy::Reoptimize)
                return solve_and_evaluate(family);
            const auto n_unl = budget > 0.0 ? affordable_count(budget, money_cost(cfg.model_costs, Subset{j})) : 0;
            if (n_unl < 2) return classical;
            double lambda = 1.0;
            if (m.kind == MethodKind::PpiPlusPlus) {
                const Matrix& lab = ctx.labeled();
                const double var = sample_cov(lab, j - 1, j - 1);
                const double ratio = static_cast<double>(n_unl) / static_cast<double>(n_lab + n_unl);
                lambda = var > 0.0 ? ratio * sample_cov(lab, 0, j - 1) / var : 0.0;
            }
            WeightScheme w{{Vector{{1.0, -lambda}}, Vector{{lambda}}}};
            return ctx.evaluate(family, Allocation{{n_lab, n_unl}}, w);
        }
        case MethodKind::PpiPlusPlusVector: {
            std::vector<int> all, proxies;
            for (int i = 1; i <= k; ++i) all.push_back(i);
            for (int i = 2; i <= k; ++i) proxies.push_back(i);
            const SubsetFamily family(k, {Subset(all), Subset(proxies)});
            if (cfg.ppi_policy == PpiBudgetPolicy::Reoptimize) return solve_and_evaluate(family);
            const auto n_unl = budget > 0.0 ? affordable_count(budget, money_cost(cfg.model_costs, Subset(proxies))) : 0;
            if (n_unl < 2) return classical;
            const Matrix& lab = ctx.labeled();
            const Eigen::Index p = k - 1;
            Matrix s22(p, p);
            Vector c(p);
            for (Eigen::Index u = 0; u < p; ++u) {
                c(u) = sample_cov(lab, u + 1, 0);
                for (Eigen::Index v = 0; v < p; ++v) s22(u, v) = sample_cov(lab, u + 1, v + 1);
            }
            const double ratio = static_cast<double>(n_unl) / static_cast<double>(n_lab + n_unl);
            const Vector lambda = ratio * (linalg::pseudo_inverse_symmetric(s22) * c);
            Vector full_w(k);
            full_w(0) = 1.0;
            full_w.tail(p) = -lambda;
            WeightScheme w{{full_w, lambda}};
            return ctx.evaluate(family, Allocation{{n_lab, n_unl}}, w);
        }
        case MethodKind::Cascade:
            if (k != 3) throw Error(ErrorCode::InvalidArgument, "the cascade baseline needs k = 3");
            return solve_and_evaluate(cascade_family());
        case MethodKind::MultiPPI:
            return solve_and_evaluate(pipeline_family(k, FamilyKind::Full));
        case MethodKind::MultiPPIRestricted:
            return solve_and_evaluate(pipeline_family(k, FamilyKind::Restricted));
    }
    return classical;
}

}  // namespace

std::vector<MetricsRow> run_grid(const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
    if (cfg.n_labeled < 2) throw Error(ErrorCode::TooFewSamples, "n_labeled must be >= 2");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    if (cfg.methods.empty()) throw Error(ErrorCode::InvalidArgument, "no methods");
    if (cfg.budgets.empty()) throw Error(ErrorCode::InvalidArgument, "no budgets");
    for (double b : cfg.budgets)
        if (!(b >= 0.0) || !std::isfinite(b)) throw Error(ErrorCode::NonpositiveBudget, "budgets must be finite and >= 0");
    const int k = cfg.source.k();
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "simulation needs a gold label and at least one proxy");
    if (cfg.model_costs.family().k() != k)
        throw Error(ErrorCode::InvalidArgument, "cost model k differs from the source's k");
    const TargetSpec target = cfg.target ? *cfg.target : TargetSpec::unit(k, 1);
    const bool gold_only = target.support() == std::vector<int>{1};
    for (const auto& m : cfg.methods)
        if (m.kind != MethodKind::MultiPPI && m.kind != MethodKind::MultiPPIRestricted && !gold_only)
            throw Error(ErrorCode::InvalidTarget, "baseline '" + m.label + "' only estimates the mean of X_1");
    const double theta = cfg.source.theta_star(target);

    const std::size_t nb = cfg.budgets.size(), nm = cfg.methods.size();
    std::vector<Accumulator> acc(nb * nm);
    Accumulator classical_acc;
    for (int t = 0; t < cfg.trials; ++t) {
        TrialContext ctx(cfg, static_cast<std::uint64_t>(t));
        Outcome classical;
        if (gold_only) {
            const auto r = classical_estimate(ctx.labeled().col(0), cfg.alpha);
            classical = {r.point, r.lo, r.hi};
        } else {
            // Plain sample mean of a^T X over the labeled rows.
            const Vector proj = ctx.labeled() * target.a();
            const auto r = classical_estimate(proj, cfg.alpha);
            classical = {r.point, r.lo, r.hi};
        }
        const double c_width = classical.hi - classical.lo;
        classical_acc.sq_err += (classical.point - theta) * (classical.point - theta);
        classical_acc.sq_width += c_width * c_width;
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t m = 0; m < nm; ++m) {
                const Outcome o = run_method(cfg.methods[m], cfg, ctx, cfg.budgets[b], classical);
                auto& a = acc[b * nm + m];
                const double err = o.point - theta;
                const double width = o.hi - o.lo;
                a.covered += (o.lo <= theta && theta <= o.hi) ? 1 : 0;
                a.err += err;
                a.sq_err += err * err;
                a.sq_width += width * width;
                a.width_ratio += c_width > 0.0 ? (width * width) / (c_width * c_width) : 1.0;
            }
        }
    }

    std::vector<MetricsRow> rows;
    const double trials = static_cast<double>(cfg.trials);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t m = 0; m < nm; ++m) {
            const auto& a = acc[b * nm + m];
            MetricsRow r;
            r.method = cfg.methods[m].label;
            r.budget = cfg.budgets[b];
            r.trials = cfg.trials;
            r.coverage = static_cast<double>(a.covered) / trials;
            r.mse = a.sq_err / trials;
            r.mean_sq_width = a.sq_width / trials;
            r.mean_error = a.err / trials;
            r.mse_fraction = a.sq_err / classical_acc.sq_err;
            r.ci_width_fraction =
                cfg.ci_width == CiWidthMode::RatioOfMeans ? a.sq_width / classical_acc.sq_width : a.width_ratio / trials;
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "method,budget,coverage,ci_width_fraction,mse_fraction,trials\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%d\n", r.budget, r.coverage, r.ci_width_fraction,
                      r.mse_fraction, r.trials);
        out << r.method << buf;
    }
}

std::vector<DecayPoint> coverage_decay_demo(const PopulationSource& source, int proxy, std::int64_t n,
                                            const std::vector<std::int64_t>& grid, int trials, std::uint64_t seed) {
    if (proxy < 2 || proxy > source.k()) throw Error(ErrorCode::InvalidArgument, "proxy index outside 2..k");
    if (n < 2) throw Error(ErrorCode::TooFewSamples, "need n >= 2 labeled pairs");
    if (trials < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 trials");
    if (grid.empty() || !std::is_sorted(grid.begin(), grid.end()) || grid.front() < 1)
        throw Error(ErrorCode::InvalidArgument, "grid must be positive and nondecreasing");
    const double theta = source.mean()(0);
    const std::int64_t n_max = grid.back();
    const Subset pair{1, proxy};
    const Subset single{proxy};
    std::vector<double> sum(grid.size(), 0.0), sum_sq(grid.size(), 0.0), lam(grid.size(), 0.0);
    for (int t = 0; t < trials; ++t) {
        auto rng_l = stream_rng(seed, static_cast<std::uint64_t>(t), kLabeledStream);
        const Matrix lab = source.draw(pair, n, rng_l);
        const double var = sample_cov(lab, 1, 1);
        const double slope = var > 0.0 ? sample_cov(lab, 0, 1) / var : 0.0;
        const double mean_y = lab.col(0).mean();
        const double mean_f = lab.col(1).mean();
        auto rng_u = stream_rng(seed, static_cast<std::uint64_t>(t), subset_stream(single));
        const Matrix unl = source.draw(single, n_max, rng_u);
        double running = 0.0;
        std::int64_t pos = 0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            for (; pos < grid[g]; ++pos) running += unl(pos, 0);
            const double big_n = static_cast<double>(grid[g]);
            const double lambda = big_n / (static_cast<double>(n) + big_n) * slope;
            const double est = mean_y - lambda * mean_f + lambda * running / big_n;
            const double err = est - theta;
            sum[g] += err;
            sum_sq[g] += err * err;
            lam[g] += lambda;
        }
    }
    std::vector<DecayPoint> out;
    const double tr = static_cast<double>(trials);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double mean = sum[g] / tr;
        const double var = std::max(0.0, (sum_sq[g] - tr * mean * mean) / (tr - 1.0));
        out.push_back({grid[g], std::abs(mean), std::sqrt(var / tr), lam[g] / tr});
    }
    return out;
}

}  // namespace multippi
