#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "miga/mgrit.hpp"

namespace miga {

enum class ExperimentKind {
    solve,
    table_nt,
    table_h,
    mms_order,
    strong_scaling,
    weak_scaling,
    nt_doubling
};

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::solve;
    std::vector<int> p_grid;
    std::vector<int> k_grid;
    std::vector<int> nt_grid;
    std::vector<int> workers_grid;
    std::string out_path = "results.csv";
    long seed = 0;
};

struct BenchParams {
    ProblemSpec problem;
    MgritConfig mgrit;
    SpatialSolverConfig spatial;
    ExperimentSpec experiment;
    // which scalars were given explicitly on the command line / config file
    bool p_set = false, k_set = false, nt_set = false;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One CSV row of an experiment sweep.
struct BenchRow {
    std::string geometry;
    int p = 0, k = 0, nt = 0;
    double theta = 1.0;
    int m = 2;
    std::string cycle, relax, solver;
    unsigned workers = 1;
    int mgrit_iters = 0;
    double final_rel_residual = 0.0;
    double wall_seconds = 0.0;
    long long total_spatial_solves = 0;
    double mean_spatial_iters = 0.0;
    bool converged = true;
};

inline const char* to_string(CycleType c) {
    switch (c) {
        case CycleType::v: return "v";
        case CycleType::f: return "f";
        default: return "two-level";
    }
}
inline const char* to_string(RelaxType r) { return r == RelaxType::f ? "f" : "fcf"; }
inline const char* to_string(SpatialSolverKind s) {
    return s == SpatialSolverKind::pmg ? "pmg" : "cg";
}

inline std::string csv_header() {
    return "geometry,p,k,N_t,theta,m,cycle,relax,solver,workers,mgrit_iters,"
           "final_rel_residual,wall_seconds,total_spatial_solves,mean_spatial_iters";
}

inline std::string to_csv(const BenchRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%g,%d,%s,%s,%s,%u,%d,%.12e,%.6f,%lld,%.4f",
                  r.geometry.c_str(), r.p, r.k, r.nt, r.theta, r.m, r.cycle.c_str(),
                  r.relax.c_str(), r.solver.c_str(), r.workers, r.mgrit_iters,
                  r.final_rel_residual, r.wall_seconds, r.total_spatial_solves,
                  r.mean_spatial_iters);
    return buf;
}

namespace detail {

// Discretizations are immutable; sweeps share them across rows.
class DiscCache {
public:
    std::shared_ptr<const SpatialDiscretization> get(const GeometryMap& geom, int p, int k,
                                                     unsigned workers) {
        const std::string key = geom.name() + "/" + std::to_string(p) + "/" + std::to_string(k);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        ThreadPool pool(workers);
        auto disc = std::make_shared<SpatialDiscretization>(
            SpatialDiscretization::build(geom, p, k, &pool));
        cache_.emplace(key, disc);
        return disc;
    }

private:
    std::map<std::string, std::shared_ptr<const SpatialDiscretization>> cache_;
};

inline void validate_time_grid(int nt, int m) {
    if (nt >= m && nt % m != 0)
        throw UsageError("--nt " + std::to_string(nt) + " is not divisible by --m " +
                         std::to_string(m) + " (required for the time-grid hierarchy)");
}

}  // namespace detail

struct SingleRun {
    BenchRow row;
    MgritResult result;
    std::shared_ptr<const SpatialDiscretization> disc;
};

/// Run one MGRIT solve with the given effective parameters; wall time covers
/// the solver loop only, not discretization/hierarchy setup.
inline SingleRun run_single(const BenchParams& bp, detail::DiscCache& cache, int p, int k, int nt,
                            unsigned workers) {
    ProblemSpec ps = bp.problem;
    ps.degree = p;
    ps.mesh_exponent = k;
    ps.n_time_steps = nt;
    MgritConfig cfg = bp.mgrit;
    cfg.workers = workers;
    detail::validate_time_grid(nt, cfg.m);

    SingleRun out;
    out.disc = cache.get(ps.geometry, p, k, workers);
    MgritSolver solver(out.disc, ps, cfg, bp.spatial);
    const auto t0 = std::chrono::steady_clock::now();
    out.result = solver.solve();
    const auto t1 = std::chrono::steady_clock::now();

    BenchRow& r = out.row;
    r.geometry = ps.geometry.name();
    r.p = p;
    r.k = k;
    r.nt = nt;
    r.theta = ps.theta;
    r.m = cfg.m;
    r.cycle = to_string(cfg.cycle);
    r.relax = to_string(cfg.relaxation);
    r.solver = to_string(bp.spatial.kind);
    r.workers = workers;
    r.mgrit_iters = out.result.iterations;
    r.final_rel_residual = out.result.final_relative_residual;
    r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    r.total_spatial_solves = out.result.total_spatial_solves;
    r.mean_spatial_iters = out.result.mean_spatial_iterations;
    r.converged = out.result.converged;
    return out;
}

struct ExperimentReport {
    std::vector<BenchRow> rows;
    std::string table_text;  // human-readable companion
    bool all_converged = true;
};

namespace detail {

inline std::string iteration_table(const std::vector<BenchRow>& rows, bool rows_are_nt) {
    // rows: N_t (or h = 2^-k), columns: p
    std::vector<int> ps, keys;
    for (const auto& r : rows) {
        if (std::find(ps.begin(), ps.end(), r.p) == ps.end()) ps.push_back(r.p);
        const int key = rows_are_nt ? r.nt : r.k;
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    std::sort(ps.begin(), ps.end());
    std::sort(keys.begin(), keys.end());
    std::ostringstream os;
    os << "MGRIT iterations (" << rows.front().geometry << ", " << rows.front().cycle
       << "-cycles, " << rows.front().relax << "-relaxation, m=" << rows.front().m << ")\n";
    os << (rows_are_nt ? "  N_t    " : "  h      ");
    for (int p : ps) os << " p=" << p << "  ";
    os << "\n";
    for (int key : keys) {
        char label[32];
        if (rows_are_nt)
            std::snprintf(label, sizeof(label), "  %-6d ", key);
        else
            std::snprintf(label, sizeof(label), "  2^-%-3d ", key);
        os << label;
        for (int p : ps) {
            int iters = -1;
            for (const auto& r : rows)
                if (r.p == p && (rows_are_nt ? r.nt : r.k) == key) iters = r.mgrit_iters;
            char cell[16];
            std::snprintf(cell, sizeof(cell), " %-5d", iters);
            os << cell;
        }
        os << "\n";
    }
    return os.str();
}

inline std::string row_listing(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << csv_header() << "\n";
    for (const auto& r : rows) os << to_csv(r) << "\n";
    return os.str();
}

inline double fit_order(const std::vector<double>& dts, const std::vector<double>& errs) {
    // least-squares slope of log(err) against log(dt)
    const std::size_t n = dts.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(dts[i]), y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

/// Manufactured solution u = sin(pi x) sin(pi y) exp(-t) on the unit square;
/// the matching source is (2 pi^2 kappa - 1) sin(pi x) sin(pi y) exp(-t).
inline ProblemSpec mms_problem(const ProblemSpec& base) {
    ProblemSpec ps = base;
    ps.geometry = GeometryMap::unit_square();
    const double kappa = ps.kappa;
    ps.source = SourceTerm::transient([kappa](double x, double y, double t) {
        const double pi = M_PI;
        return (2.0 * pi * pi * kappa - 1.0) * std::sin(pi * x) * std::sin(pi * y) * std::exp(-t);
    });
    ps.initial = [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); };
    return ps;
}

/// Max-over-time 2-norm distance between a trajectory and a finer reference
/// sampled at the shared time points.
inline double trajectory_error(const std::vector<Vector>& coarse, const std::vector<Vector>& ref) {
    const std::size_t stride = (ref.size() - 1) / (coarse.size() - 1);
    double err = 0.0;
    for (std::size_t j = 0; j < coarse.size(); ++j)
        err = std::max(err, norm2(subtract(coarse[j], ref[j * stride])));
    return err;
}

inline ExperimentReport run_experiment(const BenchParams& bp) {
    ExperimentReport rep;
    detail::DiscCache cache;
    const auto& ex = bp.experiment;
    const int p0 = bp.problem.degree, k0 = bp.problem.mesh_exponent, nt0 = bp.problem.n_time_steps;
    const unsigned w0 = bp.mgrit.workers;

    auto grid_or = [](const std::vector<int>& grid, std::vector<int> fallback) {
        return grid.empty() ? fallback : grid;
    };

    switch (ex.kind) {
        case ExperimentKind::solve: {
            rep.rows.push_back(run_single(bp, cache, p0, k0, nt0, w0).row);
            rep.table_text = detail::row_listing(rep.rows);
            break;
        }
        case ExperimentKind::table_nt: {
            const auto ps = grid_or(ex.p_grid, {2, 3, 4, 5});
            const auto nts = grid_or(ex.nt_grid, {128, 256, 512});
            for (int nt : nts)
                for (int p : ps) rep.rows.push_back(run_single(bp, cache, p, k0, nt, w0).row);
            rep.table_text = detail::iteration_table(rep.rows, true);
            break;
        }
        case ExperimentKind::table_h: {
            const auto ps = grid_or(ex.p_grid, {2, 3, 4, 5});
            const auto ks = grid_or(ex.k_grid, {4, 5, 6});
            for (int k : ks)
                for (int p : ps) rep.rows.push_back(run_single(bp, cache, p, k, nt0, w0).row);
            rep.table_text = detail::iteration_table(rep.rows, false);
            break;
        }
        case ExperimentKind::mms_order: {
            const auto nts = grid_or(ex.nt_grid, {8, 16, 32, 64});
            std::ostringstream os;
            os << "Temporal convergence, manufactured solution "
                  "u = sin(pi x) sin(pi y) exp(-t)\n";
            for (double theta : {1.0, 0.5}) {
                BenchParams mp = bp;
                mp.problem = mms_problem(bp.problem);
                mp.problem.theta = theta;
                const int nt_ref = 16 * *std::max_element(nts.begin(), nts.end());
                auto disc = cache.get(mp.problem.geometry, p0, k0, w0);
                ProblemSpec ref_ps = mp.problem;
                ref_ps.n_time_steps = nt_ref;
                ThreadPool pool(w0);
                const auto ref = sequential_integrate(*disc, ref_ps, mp.spatial, nullptr, &pool);
                std::vector<double> dts, errs;
                os << "theta=" << theta << "\n  N_t     dt          error        order\n";
                double prev_err = 0.0;
                for (int nt : nts) {
                    auto run = run_single(mp, cache, p0, k0, nt, w0);
                    rep.rows.push_back(run.row);
                    std::vector<Vector> traj;
                    traj.reserve(run.result.trajectory.size());
                    for (const auto& full : run.result.trajectory)
                        traj.push_back(restrict_vector(disc->dofmap_p, full));
                    const double err = trajectory_error(traj, ref);
                    dts.push_back(mp.problem.t_final / nt);
                    errs.push_back(err);
                    char line[128];
                    std::snprintf(line, sizeof(line), "  %-6d  %-10.4e  %-10.4e   %s\n", nt,
                                  dts.back(), err,
                                  prev_err > 0 ? std::to_string(std::log2(prev_err / err)).c_str()
                                               : "-");
                    os << line;
                    prev_err = err;
                }
                os << "  fitted order: " << detail::fit_order(dts, errs) << "\n";
            }
            rep.table_text = os.str();
            break;
        }
        case ExperimentKind::strong_scaling: {
            const auto workers = grid_or(ex.workers_grid, {1, 2, 4});
            for (int w : workers)
                rep.rows.push_back(run_single(bp, cache, p0, k0, nt0, static_cast<unsigned>(w)).row);
            std::ostringstream os;
            os << "Strong scaling (fixed problem, shared-memory worker threads on one machine)\n";
            os << detail::row_listing(rep.rows);
            const double base = rep.rows.front().wall_seconds;
            for (const auto& r : rep.rows)
                os << "workers=" << r.workers << "  speed-up=" << base / r.wall_seconds << "\n";
            rep.table_text = os.str();
            break;
        }
        case ExperimentKind::weak_scaling: {
            const auto workers = grid_or(ex.workers_grid, {1, 2, 4});
            for (int w : workers)
                rep.rows.push_back(
                    run_single(bp, cache, p0, k0, nt0 * w, static_cast<unsigned>(w)).row);
            std::ostringstream os;
            os << "Weak scaling (fixed time steps per worker, shared-memory worker threads)\n";
            os << detail::row_listing(rep.rows);
            rep.table_text = os.str();
            break;
        }
        case ExperimentKind::nt_doubling: {
            const auto nts = grid_or(ex.nt_grid, {256, 512});
            for (int nt : nts) rep.rows.push_back(run_single(bp, cache, p0, k0, nt, 1).row);
            std::ostringstream os;
            os << detail::row_listing(rep.rows);
            for (std::size_t i = 1; i < rep.rows.size(); ++i)
                os << "wall-time ratio N_t=" << rep.rows[i].nt << " vs " << rep.rows[i - 1].nt
                   << ": " << rep.rows[i].wall_seconds / rep.rows[i - 1].wall_seconds << "\n";
            rep.table_text = os.str();
            break;
        }
    }

    for (const auto& r : rep.rows) rep.all_converged = rep.all_converged && r.converged;
    return rep;
}

inline void write_report(const ExperimentReport& rep, const std::string& out_path) {
    std::ofstream csv(out_path);
    if (!csv) throw UsageError("cannot open output file: " + out_path);
    csv << csv_header() << "\n";
    for (const auto& r : rep.rows) csv << to_csv(r) << "\n";
    csv.close();

    std::filesystem::path txt(out_path);
    txt.replace_extension(".txt");
    std::ofstream t(txt);
    if (!t) throw UsageError("cannot open output file: " + txt.string());
    t << rep.table_text;
}

/// Build the CLI and parse argv into the solver/experiment configuration.
/// `--config <file>` reads newline-delimited key=value pairs with the same
/// keys as the long flags; explicit flags win over file values.
inline BenchParams parse_config(const std::vector<std::string>& args) {
    BenchParams bp;
    CLI::App app{"MGRIT benchmark for isogeometric transient diffusion"};
    app.name("miga-bench");

    std::string geometry = "unit-square", solver = "pmg", cycle = "v", relax = "fcf",
                experiment = "solve";
    app.add_option("--geometry", geometry, "spatial domain")
        ->check(CLI::IsMember({"unit-square", "quarter-annulus"}));
    auto* popt = app.add_option("--p", bp.problem.degree, "B-spline order")
                     ->check(CLI::Range(1, 8));
    auto* kopt = app.add_option("--k", bp.problem.mesh_exponent, "mesh exponent, h = 2^-k")
                     ->check(CLI::Range(1, 12));
    auto* ntopt = app.add_option("--nt", bp.problem.n_time_steps, "number of time steps")
                      ->check(CLI::PositiveNumber);
    app.add_option("--theta", bp.problem.theta,
                   "time scheme: 1 backward Euler, 0.5 Crank-Nicolson, 0 forward Euler")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--kappa", bp.problem.kappa, "diffusion coefficient")->check(CLI::PositiveNumber);
    app.add_option("--tfinal", bp.problem.t_final, "end time")->check(CLI::PositiveNumber);

    app.add_option("--solver", solver, "spatial solver")->check(CLI::IsMember({"pmg", "cg"}));
    app.add_option("--pmg-nu", bp.spatial.pmg.nu_pre, "ILUT smoothing steps (pre = post)")
        ->check(CLI::Range(0, 16));
    app.add_option("--ilut-tau", bp.spatial.pmg.ilut_tau, "ILUT drop tolerance");
    app.add_option("--ilut-fill", bp.spatial.pmg.ilut_fill,
                   "ILUT per-row fill limit (0: average row fill)");
    app.add_option("--pmg-fixed-cycles", bp.spatial.pmg_fixed_cycles,
                   "run a fixed number of p-multigrid cycles per solve instead of a tolerance");

    app.add_option("--cycle", cycle, "MGRIT cycle type")
        ->check(CLI::IsMember({"v", "f", "two-level"}));
    app.add_option("--relax", relax, "MGRIT relaxation")->check(CLI::IsMember({"f", "fcf"}));
    app.add_option("--m", bp.mgrit.m, "temporal coarsening factor")->check(CLI::Range(2, 1 << 20));
    app.add_option("--tol", bp.mgrit.halt_tol, "MGRIT relative residual tolerance");
    app.add_option("--max-iter", bp.mgrit.max_iter, "MGRIT iteration cap");
    app.add_option("--workers", bp.mgrit.workers, "worker threads for relaxation");

    app.add_option("--experiment", experiment, "experiment to run")
        ->check(CLI::IsMember({"solve", "table-nt", "table-h", "mms-order", "strong-scaling",
                               "weak-scaling", "nt-doubling"}));
    app.add_option("--p-grid", bp.experiment.p_grid, "orders for sweep experiments")
        ->delimiter(',');
    app.add_option("--k-grid", bp.experiment.k_grid, "mesh exponents for sweep experiments")
        ->delimiter(',');
    app.add_option("--nt-grid", bp.experiment.nt_grid, "time-step counts for sweep experiments")
        ->delimiter(',');
    app.add_option("--workers-grid", bp.experiment.workers_grid, "worker counts for scaling sweeps")
        ->delimiter(',');
    app.add_option("--out", bp.experiment.out_path, "CSV output path (text table next to it)");
    app.add_option("--seed", bp.experiment.seed, "seed for randomized tests");
    app.set_config("--config", "", "key=value file with the same keys as the long flags");

    std::vector<const char*> argv;
    argv.push_back("miga-bench");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        std::ostringstream os;
        os << app.help();
        throw UsageError("HELP\n" + os.str());
    } catch (const CLI::ParseError& e) {
        throw UsageError(std::string("argument error: ") + e.what());
    }

    bp.p_set = popt->count() > 0;
    bp.k_set = kopt->count() > 0;
    bp.nt_set = ntopt->count() > 0;

    bp.problem.geometry = geometry == "unit-square" ? GeometryMap::unit_square()
                                                    : GeometryMap::quarter_annulus();
    bp.spatial.kind = solver == "pmg" ? SpatialSolverKind::pmg : SpatialSolverKind::cg;
    bp.spatial.pmg.nu_post = bp.spatial.pmg.nu_pre;
    bp.mgrit.cycle = cycle == "v" ? CycleType::v
                     : cycle == "f" ? CycleType::f
                                    : CycleType::two_level;
    bp.mgrit.relaxation = relax == "f" ? RelaxType::f : RelaxType::fcf;
    const std::map<std::string, ExperimentKind> kinds{
        {"solve", ExperimentKind::solve},
        {"table-nt", ExperimentKind::table_nt},
        {"table-h", ExperimentKind::table_h},
        {"mms-order", ExperimentKind::mms_order},
        {"strong-scaling", ExperimentKind::strong_scaling},
        {"weak-scaling", ExperimentKind::weak_scaling},
        {"nt-doubling", ExperimentKind::nt_doubling}};
    bp.experiment.kind = kinds.at(experiment);

    // experiment-specific scalar defaults for values the user left unset
    if (bp.experiment.kind == ExperimentKind::strong_scaling ||
        bp.experiment.kind == ExperimentKind::weak_scaling) {
        if (!bp.nt_set) bp.problem.n_time_steps =
            bp.experiment.kind == ExperimentKind::strong_scaling ? 1024 : 256;
        if (!bp.p_set) bp.problem.degree = 3;
    }
    if (bp.experiment.kind == ExperimentKind::nt_doubling && !bp.p_set) bp.problem.degree = 3;

    try {
        bp.problem.validate();
        bp.mgrit.validate();
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }

    // divisibility of every time grid the sweep will touch
    auto nts = bp.experiment.nt_grid;
    if (nts.empty()) nts.push_back(bp.problem.n_time_steps);
    for (int nt : nts) detail::validate_time_grid(nt, bp.mgrit.m);

    return bp;
}

/// CLI entry point. Exit codes: 0 full success, 1 usage or I/O error, 2 when
/// any sweep row failed to converge.
inline int run_main(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    BenchParams bp;
    try {
        bp = parse_config(args);
    } catch (const UsageError& e) {
        const std::string msg = e.what();
        if (msg.rfind("HELP\n", 0) == 0) {
            std::fputs(msg.c_str() + 5, stdout);
            return 0;
        }
        std::fprintf(stderr, "miga-bench: %s\n", msg.c_str());
        return 1;
    }
    try {
        const ExperimentReport rep = run_experiment(bp);
        write_report(rep, bp.experiment.out_path);
        std::fputs(rep.table_text.c_str(), stdout);
        std::printf("wrote %s\n", bp.experiment.out_path.c_str());
        if (!rep.all_converged) {
            std::fprintf(stderr, "miga-bench: at least one run did not converge\n");
            return 2;
        }
        return 0;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "miga-bench: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "miga-bench: error: %s\n", e.what());
        return 1;
    }
}

}  // namespace miga
