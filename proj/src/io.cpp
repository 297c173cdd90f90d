#include "multippi/io.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

namespace multippi {

namespace {

/// Runs `fn`, turning JSON shape errors into ParseError.
template <class F>
auto guarded(const char* what, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string(what) + ": " + e.what());
    }
}

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    return j.at(key);
}

Json subset_map(const SubsetFamily& family, const auto& values) {
    Json out = Json::object();
    for (std::size_t i = 0; i < family.size(); ++i) out[family[i].to_string()] = values[i];
    return out;
}

std::string ci_mode_name(CiWidthMode m) { return m == CiWidthMode::RatioOfMeans ? "ratio_of_means" : "mean_of_ratios"; }

}  // namespace

Json matrix_to_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

Matrix matrix_from_json(const Json& j) {
    return guarded("matrix", [&] {
        if (!j.is_array() || j.empty()) throw Error(ErrorCode::ParseError, "matrix must be a nonempty array of rows");
        const auto rows = static_cast<Eigen::Index>(j.size());
        const auto cols = static_cast<Eigen::Index>(j.at(0).size());
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const auto& row = j.at(static_cast<std::size_t>(i));
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
                throw Error(ErrorCode::ParseError, "matrix rows must be arrays of equal length");
            for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
        return m;
    });
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const Json& j) {
    return guarded("vector", [&] {
        if (!j.is_array()) throw Error(ErrorCode::ParseError, "expected an array of numbers");
        Vector v(static_cast<Eigen::Index>(j.size()));
        for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
        return v;
    });
}

Json to_json(const CovarianceMatrix& sigma) { return matrix_to_json(sigma.matrix()); }

CovarianceMatrix covariance_from_json(const Json& j) { return CovarianceMatrix(matrix_from_json(j)); }

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

CovarianceMatrix read_covariance_file(const std::string& path) {
    if (std::filesystem::path(path).extension() == ".json") return covariance_from_json(read_json_file(path));
    return CovarianceMatrix(read_matrix_csv_file(path));
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
    char buf[64];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            out << (j ? "," : "") << buf;
        }
        out << '\n';
    }
}

// ------------------------------------------------------------ cost model

Json to_json(const CostModel& cm) {
    Json subsets = Json::array();
    for (const auto& s : cm.family()) subsets.push_back(s.to_string());
    return Json{{"k", cm.family().k()},
                {"subsets", subsets},
                {"costs", matrix_to_json(cm.costs())},
                {"budgets", vector_to_json(cm.budgets())}};
}

CostModel cost_model_from_json(const Json& j) {
    return guarded("cost model", [&] {
        if (!j.is_object()) throw Error(ErrorCode::ParseError, "cost model must be an object");
        const Vector budgets = j.contains("budgets") ? vector_from_json(j.at("budgets")) : Vector::Ones(1);
        if (j.contains("builder")) {
            const auto builder = j.at("builder").get<std::string>();
            CostModel base;
            if (builder == "additive") {
                base = cost_additive(field(j, "per_model").get<std::vector<double>>());
            } else if (builder == "cascading") {
                base = cost_cascading(field(j, "input_rate").get<double>(), field(j, "output_rate").get<double>(),
                                      field(j, "tiers").get<std::vector<double>>());
            } else {
                throw Error(ErrorCode::ParseError, "unknown cost builder '" + builder + "'");
            }
            return validate_cost_model(base.with_budgets(budgets));
        }
        std::vector<Subset> subsets;
        for (const auto& s : field(j, "subsets")) subsets.push_back(Subset::parse(s.get<std::string>()));
        CostModel cm(SubsetFamily(field(j, "k").get<int>(), subsets), matrix_from_json(field(j, "costs")), budgets);
        return validate_cost_model(cm);
    });
}

// ------------------------------------------------------------------ plan

Json to_json(const AllocationPlan& plan) {
    const auto& f = plan.family;
    Json family = Json::array();
    for (const auto& s : f) family.push_back(s.to_string());
    Json weights = Json::object();
    for (std::size_t i = 0; i < f.size(); ++i)
        weights[f[i].to_string()] = plan.weights.lambdas[i] ? vector_to_json(*plan.weights.lambdas[i]) : Json(nullptr);
    const auto& d = plan.diagnostics;
    return Json{{"k", f.k()},
                {"family", family},
                {"fractional", subset_map(f, plan.fractional.weights)},
                {"rounded", subset_map(f, plan.rounded.counts)},
                {"weights", weights},
                {"variance", {{"fractional", plan.predicted_variance_fractional}, {"rounded", plan.predicted_variance_rounded}}},
                {"spend", vector_to_json(plan.spend)},
                {"budgets", vector_to_json(plan.budgets)},
                {"diagnostics",
                 {{"route", d.route},
                  {"outer_iterations", d.outer_iterations},
                  {"newton_iterations", d.newton_iterations},
                  {"duality_gap", d.duality_gap},
                  {"kkt_residual", d.kkt_residual},
                  {"apparent_nonunique", d.apparent_nonunique}}}};
}

AllocationPlan plan_from_json(const Json& j) {
    return guarded("plan", [&] {
        AllocationPlan p;
        std::vector<Subset> subsets;
        for (const auto& s : field(j, "family")) subsets.push_back(Subset::parse(s.get<std::string>()));
        p.family = SubsetFamily(field(j, "k").get<int>(), subsets);
        for (const auto& s : p.family) {
            const auto key = s.to_string();
            p.fractional.weights.push_back(field(j, "fractional").at(key).get<double>());
            p.rounded.counts.push_back(field(j, "rounded").at(key).get<std::int64_t>());
            const auto& w = field(j, "weights").at(key);
            p.weights.lambdas.push_back(w.is_null() ? std::nullopt : std::optional<Vector>(vector_from_json(w)));
        }
        p.predicted_variance_fractional = field(j, "variance").at("fractional").get<double>();
        p.predicted_variance_rounded = field(j, "variance").at("rounded").get<double>();
        p.spend = vector_from_json(field(j, "spend"));
        p.budgets = vector_from_json(field(j, "budgets"));
        const auto& d = field(j, "diagnostics");
        p.diagnostics.route = d.at("route").get<std::string>();
        p.diagnostics.outer_iterations = d.at("outer_iterations").get<int>();
        p.diagnostics.newton_iterations = d.at("newton_iterations").get<int>();
        p.diagnostics.duality_gap = d.at("duality_gap").get<double>();
        p.diagnostics.kkt_residual = d.at("kkt_residual").get<double>();
        p.diagnostics.apparent_nonunique = d.at("apparent_nonunique").get<bool>();
        return p;
    });
}

// ---------------------------------------------------------------- report

Json to_json(const EstimateReport& r) {
    Json per = Json::array();
    for (const auto& s : r.per_subset)
        per.push_back({{"subset", s.subset.to_string()}, {"n", s.n}, {"mean", s.mean}, {"var", s.var}});
    Json alloc = Json::object();
    for (const auto& [s, n] : r.allocation) alloc[s.to_string()] = n;
    return Json{{"point", r.point},
                {"variance", r.variance},
                {"alpha", r.alpha},
                {"interval", {r.lo, r.hi}},
                {"per_subset", per},
                {"allocation", alloc},
                {"spend", vector_to_json(r.spend)}};
}

EstimateReport report_from_json(const Json& j) {
    return guarded("report", [&] {
        EstimateReport r;
        r.point = field(j, "point").get<double>();
        r.variance = field(j, "variance").get<double>();
        r.alpha = field(j, "alpha").get<double>();
        const auto& iv = field(j, "interval");
        if (!iv.is_array() || iv.size() != 2) throw Error(ErrorCode::ParseError, "interval must be [lo, hi]");
        r.lo = iv.at(0).get<double>();
        r.hi = iv.at(1).get<double>();
        for (const auto& s : field(j, "per_subset"))
            r.per_subset.push_back({Subset::parse(s.at("subset").get<std::string>()), s.at("n").get<std::int64_t>(),
                                    s.at("mean").get<double>(), s.at("var").get<double>()});
        for (const auto& [key, n] : field(j, "allocation").items())
            r.allocation.emplace_back(Subset::parse(key), n.get<std::int64_t>());
        r.spend = vector_from_json(field(j, "spend"));
        return r;
    });
}

// ------------------------------------------------------------ experiment

ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir) {
    return guarded("experiment config", [&] {
        ExperimentConfig c;
        const auto& src = field(j, "source");
        const auto kind = field(src, "kind").get<std::string>();
        if (kind == "gaussian") {
            c.source = PopulationSource::gaussian(vector_from_json(field(src, "mu")), matrix_from_json(field(src, "sigma")));
        } else if (kind == "empirical") {
            const bool with_replacement = src.value("with_replacement", true);
            Matrix rows;
            if (src.contains("rows")) {
                rows = matrix_from_json(src.at("rows"));
            } else {
                std::filesystem::path p = field(src, "path").get<std::string>();
                if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                rows = read_dataset_csv_file(p.string()).rows;
            }
            c.source = PopulationSource::empirical(std::move(rows), with_replacement);
        } else {
            throw Error(ErrorCode::ParseError, "unknown source kind '" + kind + "'");
        }
        for (const auto& m : field(j, "methods")) c.methods.push_back(parse_method(m.get<std::string>()));
        c.budgets = field(j, "budgets").get<std::vector<double>>();
        c.trials = j.value("trials", c.trials);
        c.n_labeled = j.value("n_labeled", c.n_labeled);
        c.alpha = j.value("alpha", c.alpha);
        c.seed = j.value("seed", c.seed);
        c.model_costs = cost_model_from_json(field(j, "cost_model"));
        if (j.contains("target")) c.target = TargetSpec(vector_from_json(j.at("target")));
        if (j.contains("covariance_method"))
            c.covariance_method = parse_covariance_method(j.at("covariance_method").get<std::string>());
        if (j.contains("ci_width")) {
            const auto mode = j.at("ci_width").get<std::string>();
            if (mode == ci_mode_name(CiWidthMode::RatioOfMeans)) c.ci_width = CiWidthMode::RatioOfMeans;
            else if (mode == ci_mode_name(CiWidthMode::MeanOfRatios)) c.ci_width = CiWidthMode::MeanOfRatios;
            else throw Error(ErrorCode::ParseError, "ci_width must be ratio_of_means or mean_of_ratios");
        }
        if (j.contains("ppi_policy")) {
            const auto policy = j.at("ppi_policy").get<std::string>();
            if (policy == "cap_then_spend") c.ppi_policy = PpiBudgetPolicy::CapThenSpend;
            else if (policy == "reoptimize") c.ppi_policy = PpiBudgetPolicy::Reoptimize;
            else throw Error(ErrorCode::ParseError, "ppi_policy must be cap_then_spend or reoptimize");
        }
        c.fast_gaussian = j.value("fast_gaussian", c.fast_gaussian);
        return c;
    });
}

Json error_json(const Error& e) { return Json{{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}}; }

}  // namespace multippi
