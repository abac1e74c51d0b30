#include "blq/cli.hpp"

#include "blq/errors.hpp"
#include "blq/io.hpp"
#include "blq/parallel.hpp"
#include "blq/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace blq {

namespace {

const std::vector<double> kStudyEps{1.0, 1e-1, 1e-2, 1e-3};

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open problem file " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Writes one artifact with its provenance header.
class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path dir, std::string hash, std::uint64_t seed)
        : dir_(std::move(dir)), hash_(std::move(hash)), seed_(seed) {
        std::filesystem::create_directories(dir_);
    }

    template <typename Body>
    void csv(const std::string& name, Body&& body) const {
        std::ofstream out = open(name);
        out << "# blq config_hash=" << hash_ << " seed=" << seed_ << '\n';
        body(out);
    }

    void json(const std::string& name, nlohmann::json doc) const {
        doc["config_hash"] = hash_;
        doc["seed"] = seed_;
        std::ofstream out = open(name);
        out << doc.dump(2) << '\n';
    }

private:
    std::ofstream open(const std::string& name) const {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + (dir_ / name).string());
        return out;
    }

    std::filesystem::path dir_;
    std::string hash_;
    std::uint64_t seed_;
};

// Loads and audits the problem; throws ValidationError with the failed assumptions listed.
ProblemInstance load_valid_problem(const RunConfig& cfg, AssumptionReport& report) {
    ProblemInstance p = load_problem(cfg.problem_path);
    report = validate_assumptions(p, default_sample_grid(p));
    if (!report.all_ok()) {
        std::string msg = "standing assumptions fail";
        for (const auto& m : report.messages) msg += "; " + m;
        throw ValidationError(msg);
    }
    return p;
}

nlohmann::json config_json(const RunConfig& cfg) {
    return {{"command", cfg.command},
            {"steps", cfg.solve.steps},
            {"paths", cfg.solve.paths},
            {"degree", cfg.solve.degree},
            {"rational_feature", cfg.solve.rational_feature},
            {"route", route_name(cfg.solve.route)},
            {"filtration", filtration_name(cfg.solve.filtration)},
            {"eps", cfg.solve.eps},
            {"inject_defect", cfg.inject_defect}};
}

nlohmann::json solve_summary(const SolveOutcome& s, const CostBreakdown& cost, const ResidualReport& residuals) {
    const Filtration& f = *s.filtration;
    nlohmann::json j{{"route", route_name(s.route)},
                     {"value", cost.total},
                     {"value_stderr", cost.standard_error},
                     {"cost", to_json(cost)},
                     {"control_l2_norm", control_norm(f, s.triple.u)},
                     {"residuals", to_json(residuals)},
                     {"riccati",
                      {{"projections", s.riccati.sigma.projections},
                       {"clamps", s.riccati.sigma.clamps},
                       {"max_abs_lambda", s.riccati.sigma.max_lambda},
                       {"sigma_t0", nlohmann::json::array()}}},
                     {"auxiliary", {{"max_abs_phi", s.aux.max_phi}, {"max_abs_beta", s.aux.max_beta}}},
                     {"forward", {{"max_abs_X", s.forward.max_abs}}}};
    const Mat s0 = s.riccati.sigma.sigma_at(0, 0);
    for (Eigen::Index i = 0; i < s0.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < s0.cols(); ++c) row.push_back(s0(i, c));
        j["riccati"]["sigma_t0"].push_back(row);
    }
    if (s.riccati.eps) j["eps_limit"] = to_json(*s.riccati.eps);
    return j;
}

void write_solution_files(const ArtifactWriter& w, const SolveOutcome& s, Eigen::Index dump) {
    const Filtration& f = *s.filtration;
    w.csv("Sigma.csv", [&](std::ostream& out) {
        write_sigma_csv(out, s.riccati.sigma, f.grid(), &f, dump);
    });
    w.csv("control.csv", [&](std::ostream& out) { write_control_csv(out, f, s.triple.u, dump); });
    w.csv("triple.csv", [&](std::ostream& out) { write_triple_csv(out, f, s.triple, dump); });
}

void inject(const RunConfig& cfg, const DiscreteOperatorBundle& bundle, OptimalTriple& triple) {
    if (cfg.inject_defect == "control") {
        triple.u = control_axpy(triple.u, 0.5, bundle.random_control(cfg.solve.seed + 7919));
    } else if (cfg.inject_defect == "triple") {
        for (auto& y : triple.state.Y) y.array() += 1.0;
    }
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
    const ProblemInstance p = load_problem(cfg.problem_path);
    const AssumptionReport report = validate_assumptions(p, default_sample_grid(p));
    out << to_json(report).dump(2) << '\n';
    return report.all_ok() ? kExitOk : kExitInvalid;
}

int cmd_solve(const RunConfig& cfg, const std::string& hash, std::string& stage, std::ostream& out) {
    stage = "validate";
    AssumptionReport assumptions;
    const ProblemInstance p = load_valid_problem(cfg, assumptions);
    stage = "solve";
    const SolveOutcome s = run_solve(p, cfg.solve);
    stage = "cost";
    const DiscreteOperatorBundle bundle(p, *s.filtration, s.table);
    const CostBreakdown cost = bundle.cost(s.triple.u);
    ResidualReport residuals = fbsde_residuals(p, *s.table, *s.filtration, s.triple, s.xi);
    residuals.decoupling_max = s.decoupling;
    stage = "write";
    const ArtifactWriter w(cfg.out_dir, hash, cfg.solve.seed);
    write_solution_files(w, s, cfg.dump_paths);
    nlohmann::json report = solve_summary(s, cost, residuals);
    report["config"] = config_json(cfg);
    report["assumptions"] = to_json(assumptions);
    w.json("report.json", report);
    out << "value " << format_number(cost.total) << " +- " << format_number(cost.standard_error) << ", |u| "
        << format_number(control_norm(*s.filtration, s.triple.u)) << '\n';
    return kExitOk;
}

int cmd_verify(const RunConfig& cfg, const std::string& hash, std::string& stage, std::ostream& out) {
    stage = "validate";
    AssumptionReport assumptions;
    const ProblemInstance p = load_valid_problem(cfg, assumptions);
    stage = "solve";
    SolveOutcome s = run_solve(p, cfg.solve);
    stage = "verify";
    const Filtration& f = *s.filtration;
    const DiscreteOperatorBundle bundle(p, f, s.table);
    inject(cfg, bundle, s.triple);
    VerifyTolerances tol;
    tol.seed = cfg.solve.seed;
    tol.run_oracle = cfg.run_oracle;
    VerificationReport v = verify_optimality(bundle, s.triple, tol);
    v.residuals.decoupling_max = s.decoupling;
    const RiccatiSolution& sigma = s.riccati.sigma;
    v.fixed_point_tolerance = fixed_point_tolerance(sigma);
    v.fixed_point_residual = fixed_point_residual(p, sigma, f.grid(), sigma.per_atom ? &f : nullptr);
    v.fixed_point_ok = *v.fixed_point_residual <= v.fixed_point_tolerance;
    stage = "write";
    const ArtifactWriter w(cfg.out_dir, hash, cfg.solve.seed);
    write_solution_files(w, s, cfg.dump_paths);
    nlohmann::json report = solve_summary(s, v.cost, v.residuals);
    report["config"] = config_json(cfg);
    report["assumptions"] = to_json(assumptions);
    report["verification"] = to_json(v);
    w.json("report.json", report);
    const nlohmann::json flags = report["verification"]["pass"];
    for (const auto& [name, ok] : flags.items()) out << (ok.get<bool>() ? "PASS " : "FAIL ") << name << '\n';
    return v.all_ok() ? kExitOk : kExitFailed;
}

int cmd_eps_study(const RunConfig& cfg, const std::string& hash, std::string& stage, std::ostream& out) {
    stage = "validate";
    AssumptionReport assumptions;
    const ProblemInstance p = load_valid_problem(cfg, assumptions);
    const std::vector<double>& eps = cfg.solve.eps;
    if (eps.size() < 2) throw ValidationError("eps-study needs at least two eps values");
    stage = "eps-limit";
    std::shared_ptr<const Filtration> f;
    if (!p.is_deterministic()) f = make_filtration(p, cfg.solve);
    const TimeGrid grid(p.t0, p.T, cfg.solve.steps);
    const EpsLimitResult r = eps_limit_sigma(p, grid, eps, f.get(), false);
    stage = "write";
    const ArtifactWriter w(cfg.out_dir, hash, cfg.solve.seed);
    nlohmann::json doc = to_json(r);
    doc["config"] = config_json(cfg);
    w.json("eps_table.json", doc);
    for (std::size_t i = 0; i + 1 < r.eps.size(); ++i)
        out << format_number(r.eps[i]) << " -> " << format_number(r.eps[i + 1]) << ": sup diff "
            << format_number(r.differences[i]) << (r.monotone[i] ? " monotone" : " NOT monotone") << '\n';
    return kExitOk;
}

} // namespace

std::string config_hash(const RunConfig& cfg, const std::string& problem_text) {
    nlohmann::json j = config_json(cfg);
    j["seed"] = cfg.solve.seed;
    j["problem"] = problem_text;
    j["dump_paths"] = cfg.dump_paths;
    j["oracle"] = cfg.run_oracle;
    return digest_hex(j.dump());
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Backward linear-quadratic stochastic control solver", "blq"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string route = "auto", filtration = "regression";
    std::vector<const CLI::Option*> eps_options;

    auto common = [&](CLI::App* sub) {
        sub->add_option("problem", cfg.problem_path, "problem definition (JSON)")->required();
        if (sub->get_name() == "validate") return;
        sub->add_option("--steps", cfg.solve.steps, "time steps K")->check(CLI::PositiveNumber);
        sub->add_option("--paths", cfg.solve.paths, "Monte Carlo paths M")->check(CLI::PositiveNumber);
        sub->add_option("--seed", cfg.solve.seed, "random seed");
        sub->add_option("--degree", cfg.solve.degree, "polynomial regression degree")->check(CLI::NonNegativeNumber);
        sub->add_flag("!--no-rational", cfg.solve.rational_feature, "drop the 1/(1+w^2) regression feature");
        eps_options.push_back(sub->add_option("--eps", cfg.solve.eps, "decreasing eps sequence")->delimiter(','));
        sub->add_option("--route", route, "auto, ode, eps or markov");
        sub->add_option("--filtration", filtration, "regression (Monte Carlo) or lattice (binary tree)");
        sub->add_option("--threads", cfg.threads, "worker thread cap (0 = runtime default)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--dump-paths", cfg.dump_paths, "scenarios written to per-path CSV files")
            ->check(CLI::NonNegativeNumber);
        if (sub->get_name() == "verify") {
            sub->add_option("--inject-defect", cfg.inject_defect, "control or triple")
                ->check(CLI::IsMember({"control", "triple"}));
            sub->add_flag("!--no-oracle", cfg.run_oracle, "skip the conjugate-gradient oracle");
        }
    };
    for (const char* name : {"validate", "solve", "verify", "eps-study"}) {
        CLI::App* sub = app.add_subcommand(name);
        common(sub);
    }
    app.get_subcommand("validate")->description("audit the standing assumptions of a problem file");
    app.get_subcommand("solve")->description("solve and write Sigma.csv, control.csv, triple.csv, report.json");
    app.get_subcommand("verify")->description("solve in place and certify optimality (exit 4 on failure)");
    app.get_subcommand("eps-study")->description("eps-perturbation convergence table (eps_table.json)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    cfg.command = app.get_subcommands().front()->get_name();
    for (const CLI::Option* opt : eps_options)
        if (opt->count() > 0) cfg.eps_given = true;
    if (cfg.command == "eps-study" && !cfg.eps_given) cfg.solve.eps = kStudyEps;

    std::string stage = "configure";
    try {
        cfg.solve.route = parse_route(route);
        cfg.solve.filtration = parse_filtration(filtration);
        set_worker_threads(cfg.threads);
        if (cfg.command == "validate") return cmd_validate(cfg, out);
        const std::string hash = config_hash(cfg, read_text(cfg.problem_path));
        if (cfg.command == "solve") return cmd_solve(cfg, hash, stage, out);
        if (cfg.command == "verify") return cmd_verify(cfg, hash, stage, out);
        return cmd_eps_study(cfg, hash, stage, out);
    } catch (const ValidationError& e) {
        err << "error [" << stage << "]: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const CapacityError& e) {
        err << "error [" << stage << "]: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const Error& e) {
        err << "error [" << stage << "]: " << e.what() << '\n';
        return kExitSolver;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error [" << stage << "]: " << e.what() << '\n';
        return kExitSolver;
    }
}

} // namespace blq
