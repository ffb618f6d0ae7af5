#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "miga/theta.hpp"
#include "miga/thread_pool.hpp"

namespace miga {

enum class CycleType { v, f, two_level };
enum class RelaxType { f, fcf };

struct MgritConfig {
    CycleType cycle = CycleType::v;
    RelaxType relaxation = RelaxType::fcf;
    int m = 2;               // temporal coarsening factor
    double halt_tol = 1e-10; // relative space-time residual
    int max_iter = 50;
    int coarse_floor = 8;    // stop coarsening when the next level would have <= this many points
    unsigned workers = 1;

    void validate() const {
        if (m < 2) throw std::invalid_argument("MgritConfig: m must be >= 2");
        if (max_iter < 1) throw std::invalid_argument("MgritConfig: max_iter must be >= 1");
        if (!(halt_tol > 0.0)) throw std::invalid_argument("MgritConfig: tol must be > 0");
    }
};

struct MgritResult {
    std::vector<Vector> trajectory;  // full dofs, boundary carried as explicit zeros
    int iterations = 0;
    std::vector<double> residual_history;  // relative, one entry per iteration
    bool converged = false;
    double g_norm = 0.0;
    double final_relative_residual = 0.0;
    long long total_spatial_solves = 0;
    double mean_spatial_iterations = 0.0;
};

/// Multigrid-reduced-in-time solver for the lower-bidiagonal space-time
/// system of the theta scheme. Level l rediscretizes the propagator with
/// step size dt * m^l; every m-th point is a C-point. Relaxation sweeps are
/// independent per coarse interval and run on a fixed worker pool with
/// static partitioning, so iteration counts and residuals do not depend on
/// the worker count.
class MgritSolver {
public:
    struct Level {
        int steps = 0;
        double dt = 0.0;
        std::unique_ptr<ThetaStepper> stepper;
        LoadSchedule loads;           // only the finest level carries the source
        std::vector<Vector> u, g;     // steps + 1 entries each
        int intervals(int m) const { return steps / m; }
    };

    MgritSolver(std::shared_ptr<const SpatialDiscretization> disc, ProblemSpec ps,
                MgritConfig cfg, SpatialSolverConfig scfg)
        : disc_(std::move(disc)), ps_(std::move(ps)), cfg_(cfg), scfg_(scfg),
          pool_(cfg.workers) {
        ps_.validate();
        cfg_.validate();
        build_levels();
    }

    int n_levels() const { return static_cast<int>(levels_.size()); }
    const Level& level(int l) const { return levels_[l]; }
    Level& level(int l) { return levels_[l]; }
    double g_norm() const { return g_norm_; }
    const SpatialDiscretization& discretization() const { return *disc_; }

    /// Reset the space-time state: the projected initial condition at t0,
    /// zero everywhere else, and the reference norm of the right-hand side.
    void initialize() {
        const int nf = disc_->dofmap_p.n_free;
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            auto& lev = levels_[l];
            lev.u.assign(lev.steps + 1, Vector(nf, 0.0));
            lev.g.assign(lev.steps + 1, Vector(nf, 0.0));
        }
        Vector u0 = project_initial(*disc_, ps_.initial, &pool_);
        levels_[0].g[0] = u0;
        levels_[0].u[0] = std::move(u0);
        stats_.solves = 0;
        stats_.iterations = 0;
        g_norm_ = compute_g_norm();
    }

    MgritResult solve() {
        initialize();
        MgritResult res;
        res.g_norm = g_norm_;
        const double denom = g_norm_ > 0.0 ? g_norm_ : 1.0;
        for (int it = 1; it <= cfg_.max_iter; ++it) {
            mgrit_cycle(0);
            const double rel = residual_norm(0) / denom;
            res.residual_history.push_back(rel);
            res.iterations = it;
            if (rel <= cfg_.halt_tol) {
                res.converged = true;
                break;
            }
        }
        res.final_relative_residual = res.residual_history.back();
        res.trajectory.reserve(levels_[0].steps + 1);
        for (const auto& u : levels_[0].u)
            res.trajectory.push_back(extend_vector(disc_->dofmap_p, u));
        res.total_spatial_solves = stats_.solves.load();
        res.mean_spatial_iterations =
            res.total_spatial_solves > 0
                ? static_cast<double>(stats_.iterations.load()) / res.total_spatial_solves
                : 0.0;
        return res;
    }

    /// Propagate within every coarse interval: starting from the C-point
    /// value, recompute the F-points in sequence. Intervals are independent.
    void f_relax(int l) {
        auto& lev = levels_[l];
        const int m = cfg_.m;
        pool_.parallel_for(lev.intervals(m), [&](std::size_t j) {
            const int base = static_cast<int>(j) * m;
            for (int t = 1; t < m; ++t) {
                const int k = base + t;
                step_into(l, k);
            }
        });
    }

    /// Overwrite every interior C-point from its preceding F-point.
    void c_relax(int l) {
        auto& lev = levels_[l];
        const int m = cfg_.m;
        pool_.parallel_for(lev.intervals(m), [&](std::size_t j) {
            step_into(l, (static_cast<int>(j) + 1) * m);
        });
    }

    void fcf_relax(int l) {
        f_relax(l);
        c_relax(l);
        f_relax(l);
    }

    /// Injection restriction: the coarse right-hand side is the fine residual
    /// at the C-points; the coarse state is zeroed for the error solve.
    void restrict_residual(int l) {
        auto& fine = levels_[l];
        auto& coarse = levels_[l + 1];
        const int m = cfg_.m;
        pool_.parallel_for(fine.intervals(m) + 1, [&](std::size_t j) {
            const int k = static_cast<int>(j) * m;
            if (j == 0) {
                coarse.g[0] = subtract(fine.g[0], fine.u[0]);
            } else {
                Vector w = step_value(l, k);
                axpy(1.0, fine.g[k], w);
                coarse.g[j] = subtract(w, fine.u[k]);
            }
            std::fill(coarse.u[j].begin(), coarse.u[j].end(), 0.0);
        });
        coarse.u[0] = coarse.g[0];
    }

    /// Coarse-grid correction as the action of the ideal interpolation:
    /// inject the coarse values at the C-points, then F-relax to propagate
    /// them exactly across the F-points.
    void interpolate_and_correct(int l) {
        auto& fine = levels_[l];
        auto& coarse = levels_[l + 1];
        const int m = cfg_.m;
        pool_.parallel_for(fine.intervals(m) + 1, [&](std::size_t j) {
            axpy(1.0, coarse.u[j], fine.u[static_cast<int>(j) * m]);
        });
        f_relax(l);
    }

    /// One multigrid cycle rooted at level l following the configured cycle
    /// type; the coarsest level is solved exactly by block-forward
    /// substitution.
    void mgrit_cycle(int l) { cycle_impl(l, cfg_.cycle == CycleType::f); }

    /// Exact sequential solve of a level's system (used on the coarsest).
    void coarsest_solve(int l) {
        auto& lev = levels_[l];
        lev.u[0] = lev.g[0];
        for (int k = 1; k <= lev.steps; ++k) {
            step_into(l, k);
        }
    }

    /// Full space-time residual 2-norm over the concatenated free dofs.
    double residual_norm(int l) {
        auto& lev = levels_[l];
        std::vector<double> sq(lev.steps + 1, 0.0);
        pool_.parallel_for(lev.steps + 1, [&](std::size_t k) {
            Vector r;
            if (k == 0) {
                r = subtract(lev.g[0], lev.u[0]);
            } else {
                r = step_value(l, static_cast<int>(k));
                axpy(1.0, lev.g[k], r);
                r = subtract(r, lev.u[k]);
            }
            sq[k] = dot(r, r);
        });
        double total = 0.0;
        for (double s : sq) total += s;  // fixed order, independent of workers
        return std::sqrt(total);
    }

private:
    void build_levels() {
        const int m = cfg_.m;
        const int nt = ps_.n_time_steps;
        if (nt >= m && nt % m != 0)
            throw std::invalid_argument("MGRIT: nt (" + std::to_string(nt) +
                                        ") not divisible by coarsening factor m (" +
                                        std::to_string(m) + ")");
        std::vector<int> steps{nt};
        while (true) {
            const int cur = steps.back();
            if (cur % m != 0 || cur < m) break;
            const int next = cur / m;
            const bool first_coarse = steps.size() == 1;
            if (!first_coarse && next + 1 <= cfg_.coarse_floor) break;
            steps.push_back(next);
            if (cfg_.cycle == CycleType::two_level) break;
        }
        const double dt0 = ps_.dt();
        levels_.resize(steps.size());
        for (std::size_t l = 0; l < steps.size(); ++l) {
            auto& lev = levels_[l];
            lev.steps = steps[l];
            lev.dt = dt0 * (nt / steps[l]);
            lev.stepper = std::make_unique<ThetaStepper>(*disc_, ps_.kappa, lev.dt, ps_.theta, scfg_);
        }
        levels_[0].loads =
            LoadSchedule::build(*disc_, ps_.source, dt0, ps_.theta, nt, &pool_);
    }

    const Vector& load_term(int l, int k) const {
        static const Vector kEmpty;
        if (l != 0) return kEmpty;
        return levels_[0].loads.term(k);
    }

    // u[k] <- Phi(u[k-1]) + load + g[k], seeded with the current value.
    void step_into(int l, int k) {
        auto& lev = levels_[l];
        Vector w = step_value(l, k);
        axpy(1.0, lev.g[k], w);
        lev.u[k] = std::move(w);
    }

    // Phi(u[k-1]) + load without the g contribution.
    Vector step_value(int l, int k) {
        auto& lev = levels_[l];
        try {
            return lev.stepper->step(lev.u[k - 1], load_term(l, k), lev.u[k], &stats_);
        } catch (const std::exception& e) {
            throw std::runtime_error("MGRIT level " + std::to_string(l) + ", time step " +
                                     std::to_string(k) + ": " + e.what());
        }
    }

    void relax(int l) {
        if (cfg_.relaxation == RelaxType::fcf)
            fcf_relax(l);
        else
            f_relax(l);
    }

    void cycle_impl(int l, bool f_schedule) {
        if (l + 1 == n_levels()) {
            coarsest_solve(l);
            return;
        }
        relax(l);
        restrict_residual(l);
        cycle_impl(l + 1, f_schedule);
        interpolate_and_correct(l);
        if (f_schedule && l + 2 < n_levels()) cycle_impl(l, false);
    }

    /// || g ||_2 of the underlying space-time system, whose k-th block is the
    /// solved load contribution Phi_+^{-1} F_k (one solve for steady sources).
    double compute_g_norm() {
        auto& lev0 = levels_[0];
        double total = dot(lev0.g[0], lev0.g[0]);
        if (!lev0.loads.empty()) {
            if (!ps_.source.time_dependent) {
                const Vector v = lev0.stepper->solve_lhs(lev0.loads.term(1), {}, &stats_);
                total += lev0.steps * dot(v, v);
            } else {
                std::vector<double> sq(lev0.steps + 1, 0.0);
                pool_.parallel_for(lev0.steps, [&](std::size_t i) {
                    const int k = static_cast<int>(i) + 1;
                    const Vector v = lev0.stepper->solve_lhs(lev0.loads.term(k), {}, &stats_);
                    sq[k] = dot(v, v);
                });
                for (double s : sq) total += s;
            }
        }
        return std::sqrt(total);
    }

    std::shared_ptr<const SpatialDiscretization> disc_;
    ProblemSpec ps_;
    MgritConfig cfg_;
    SpatialSolverConfig scfg_;
    ThreadPool pool_;
    std::vector<Level> levels_;
    SolveStats stats_;
    double g_norm_ = 0.0;
};

/// Convenience wrapper: build the discretization, run MGRIT, return the
/// result.
inline MgritResult mgrit_solve(const ProblemSpec& ps, const MgritConfig& cfg,
                               const SpatialSolverConfig& scfg) {
    ThreadPool setup_pool(cfg.workers);
    auto disc = std::make_shared<SpatialDiscretization>(
        SpatialDiscretization::build(ps.geometry, ps.degree, ps.mesh_exponent, &setup_pool));
    MgritSolver solver(disc, ps, cfg, scfg);
    return solver.solve();
}

}  // namespace miga
