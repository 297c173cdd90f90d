#include "multippi/io.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace multippi;

namespace {

/// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
    out << text;
}

std::string check_format(const std::string& f) {
    if (f != "json" && f != "csv") throw Error(ErrorCode::InvalidArgument, "format must be json or csv");
    return f;
}

/// Batch files may carry a header row; it is skipped when the first field is not numeric.
Matrix read_batch_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
    std::string first;
    std::getline(in, first);
    const auto field = first.substr(0, first.find(','));
    bool numeric = true;
    try {
        std::size_t used = 0;
        std::stod(field, &used);
    } catch (const std::exception&) {
        numeric = false;
    }
    in.clear();
    in.seekg(0);
    if (!numeric) return read_dataset_csv(in).rows;
    return read_matrix_csv(in);
}

Vector parse_numbers(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            vals.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, "'" + item + "' is not a number");
        }
    }
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

TargetSpec target_or_unit(const std::string& text, int k) {
    if (text.empty()) return TargetSpec::unit(k, 1);
    return TargetSpec(parse_numbers(text));
}

// ------------------------------------------------------------ commands

struct CovarianceArgs {
    std::string input, method = "ledoit_wolf", format = "json", output;
};

void cmd_covariance(const CovarianceArgs& a) {
    const auto fmt = check_format(a.format);
    const auto data = read_dataset_csv_file(a.input);
    const auto sigma = estimate_covariance(data.rows, parse_covariance_method(a.method));
    if (fmt == "csv") {
        std::ostringstream out;
        write_matrix_csv(out, sigma.matrix());
        emit(a.output, out.str());
    } else {
        emit(a.output, to_json(sigma).dump() + "\n");
    }
}

struct AllocateArgs {
    std::string covariance, cost_model, target, output;
    std::vector<double> budgets;
};

void cmd_allocate(const AllocateArgs& a) {
    const auto sigma = read_covariance_file(a.covariance);
    auto cm = cost_model_from_json(read_json_file(a.cost_model));
    if (!a.budgets.empty())
        cm = validate_cost_model(
            cm.with_budgets(Eigen::Map<const Vector>(a.budgets.data(), static_cast<Eigen::Index>(a.budgets.size()))));
    const auto plan = solve_allocation(sigma, target_or_unit(a.target, sigma.k()), cm);
    emit(a.output, to_json(plan).dump(2) + "\n");
}

struct EstimateArgs {
    std::string labeled, cost_model, batches, source, family = "full", method = "ledoit_wolf", target, output;
    double alpha = 0.05;
    std::optional<double> budget;
    std::uint64_t seed = 0;
};

void cmd_estimate(const EstimateArgs& a) {
    if (a.batches.empty() == a.source.empty())
        throw Error(ErrorCode::InvalidArgument, "give exactly one of --batches or --source");
    const auto data = read_dataset_csv_file(a.labeled);
    const int k = static_cast<int>(data.rows.cols());
    const auto n_lab = static_cast<std::int64_t>(data.rows.rows());
    const auto given = cost_model_from_json(read_json_file(a.cost_model));
    if (given.family().k() != k) throw Error(ErrorCode::InvalidArgument, "cost model k differs from the labeled columns");

    PipelineConfig cfg;
    cfg.covariance_method = parse_covariance_method(a.method);
    cfg.alpha = a.alpha;
    std::vector<int> all(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i + 1;
    if (given.family().find(Subset(all))) {
        cfg.cost_model = a.budget ? given.with_budgets(Vector::Constant(1, *a.budget)) : given;
    } else {
        const auto family = pipeline_family(k, parse_family_kind(a.family));
        std::vector<double> model_costs;
        for (std::size_t i = 1; i < family.size(); ++i) {
            const auto at = given.family().find(family[i]);
            if (!at) throw Error(ErrorCode::MissingSubset, "cost model has no entry for {" + family[i].to_string() + "}");
            model_costs.push_back(given.costs()(static_cast<Eigen::Index>(*at), 0));
        }
        cfg.cost_model = labeled_cap_model(family, model_costs, a.budget.value_or(given.budgets()(0)), n_lab);
    }

    BatchSource source;
    std::optional<PopulationSource> population;
    if (!a.batches.empty()) {
        source = [dir = a.batches](const Subset& s, std::int64_t n) -> Matrix {
            const auto path = (std::filesystem::path(dir) / (s.to_string() + ".csv")).string();
            if (!std::filesystem::exists(path))
                throw Error(ErrorCode::MissingSubset, "no batch file '" + path + "' for {" + s.to_string() + "}");
            const Matrix rows = read_batch_file(path);
            if (rows.cols() != static_cast<Eigen::Index>(s.size()))
                throw Error(ErrorCode::CountMismatch, path + " has " + std::to_string(rows.cols()) + " columns, expected " +
                                                          std::to_string(s.size()));
            if (rows.rows() < n)
                throw Error(ErrorCode::TooFewSamples, path + " has " + std::to_string(rows.rows()) + " rows, plan needs " +
                                                          std::to_string(n));
            return rows.topRows(n);
        };
    } else {
        // Reuses the experiment-config source block.
        Json wrapper = {{"source", read_json_file(a.source)}, {"methods", Json::array()}, {"budgets", Json::array()},
                        {"cost_model", to_json(given)}};
        population = experiment_from_json(wrapper, std::filesystem::path(a.source).parent_path()).source;
        if (population->k() != k) throw Error(ErrorCode::InvalidArgument, "source k differs from the labeled columns");
        source = [&population, seed = a.seed](const Subset& s, std::int64_t n) {
            std::uint64_t mask = 0;
            for (int i : s.indices()) mask |= std::uint64_t{1} << (i - 1);
            auto rng = stream_rng(seed, 0, mask);
            return population->draw(s, n, rng);
        };
    }
    const auto result = pipeline_run(data.rows, target_or_unit(a.target, k), cfg, source);
    emit(a.output, to_json(result.report).dump(2) + "\n");
}

struct SimulateArgs {
    std::string config, format = "csv", output;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
};

void cmd_simulate(const SimulateArgs& a) {
    const auto fmt = check_format(a.format);
    auto cfg = experiment_from_json(read_json_file(a.config), std::filesystem::path(a.config).parent_path());
    if (a.trials) cfg.trials = *a.trials;
    if (a.seed) cfg.seed = *a.seed;
    const auto rows = run_grid(cfg);
    if (fmt == "csv") {
        std::ostringstream out;
        write_metrics_csv(out, rows);
        emit(a.output, out.str());
        return;
    }
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back({{"method", r.method},
                       {"budget", r.budget},
                       {"coverage", r.coverage},
                       {"ci_width_fraction", r.ci_width_fraction},
                       {"mse_fraction", r.mse_fraction},
                       {"trials", r.trials}});
    emit(a.output, arr.dump(2) + "\n");
}

int report_error(const Error& e) {
    std::cerr << error_json(e).dump() << std::endl;
    return e.code() == ErrorCode::SolverNotConverged ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budget-optimal allocation and estimation across subsets of predictors"};
    app.require_subcommand(1);

    CovarianceArgs cov;
    auto* c = app.add_subcommand("covariance", "Estimate the covariance of a labeled dataset (CSV with header)");
    c->add_option("input", cov.input, "dataset CSV")->required();
    c->add_option("--method", cov.method, "ledoit_wolf or empirical")->capture_default_str();
    c->add_option("--format", cov.format, "json or csv")->capture_default_str();
    c->add_option("-o,--output", cov.output, "output file (default stdout)");

    AllocateArgs alloc;
    auto* al = app.add_subcommand("allocate", "Solve for the variance-minimizing allocation and weights");
    al->add_option("--covariance", alloc.covariance, "covariance .json (array of rows) or headerless .csv")->required();
    al->add_option("--cost-model", alloc.cost_model, "cost model JSON")->required();
    al->add_option("--target", alloc.target, "comma-separated a (default e_1)");
    al->add_option("--budget", alloc.budgets, "override the budget vector")->delimiter(',');
    al->add_option("-o,--output", alloc.output, "output file (default stdout)");

    EstimateArgs est;
    auto* e = app.add_subcommand("estimate", "Run the full pipeline: covariance, allocation, estimate");
    e->add_option("--labeled", est.labeled, "fully labeled CSV with header")->required();
    e->add_option("--cost-model", est.cost_model, "cost model JSON (model subsets, or a full pipeline model)")->required();
    e->add_option("--budget", est.budget, "money budget (default: the cost model's first budget)");
    e->add_option("--batches", est.batches, "directory of <subset>.csv batch files");
    e->add_option("--source", est.source, "population source JSON to draw batches from");
    e->add_option("--seed", est.seed, "seed for --source draws")->capture_default_str();
    e->add_option("--family", est.family, "full or restricted")->capture_default_str();
    e->add_option("--method", est.method, "covariance method")->capture_default_str();
    e->add_option("--target", est.target, "comma-separated a (default e_1)");
    e->add_option("--alpha", est.alpha, "1 - confidence level")->capture_default_str();
    e->add_option("-o,--output", est.output, "output file (default stdout)");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Monte Carlo grid from an experiment config");
    s->add_option("config", sim.config, "experiment config JSON")->required();
    s->add_option("--trials", sim.trials, "override the trial count");
    s->add_option("--seed", sim.seed, "override the seed");
    s->add_option("--format", sim.format, "csv or json")->capture_default_str();
    s->add_option("-o,--output", sim.output, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h);
    } catch (const CLI::CallForAllHelp& h) {
        return app.exit(h);
    } catch (const CLI::ParseError& p) {
        return report_error(Error(ErrorCode::InvalidArgument, p.what()));
    }

    try {
        if (*c) cmd_covariance(cov);
        else if (*al) cmd_allocate(alloc);
        else if (*e) cmd_estimate(est);
        else if (*s) cmd_simulate(sim);
    } catch (const Error& err) {
        return report_error(err);
    } catch (const std::exception& ex) {
        return report_error(Error(ErrorCode::InvalidArgument, ex.what()));
    }
    return 0;
}
