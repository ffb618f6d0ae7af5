#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "miga/pmultigrid.hpp"

namespace miga {

/// Source term f; steady sources are assembled once per level, transient
/// ones once per time point.
struct SourceTerm {
    std::function<double(double, double, double)> value;  // (x, y, t)
    bool time_dependent = false;
    bool zero = false;

    static SourceTerm constant(double c) {
        SourceTerm s;
        s.value = [c](double, double, double) { return c; };
        s.zero = (c == 0.0);
        return s;
    }
    static SourceTerm steady(std::function<double(double, double)> f) {
        SourceTerm s;
        s.value = [f = std::move(f)](double x, double y, double) { return f(x, y); };
        return s;
    }
    static SourceTerm transient(std::function<double(double, double, double)> f) {
        SourceTerm s;
        s.value = std::move(f);
        s.time_dependent = true;
        return s;
    }
};

/// The transient diffusion problem and its discretization parameters.
struct ProblemSpec {
    double kappa = 1.0;
    double t_final = 0.1;
    int n_time_steps = 64;
    double theta = 1.0;  // 1 backward Euler, 0.5 Crank-Nicolson, 0 forward Euler
    SourceTerm source = SourceTerm::constant(1.0);
    std::function<double(double, double)> initial;  // empty means zero
    GeometryMap geometry;
    int degree = 2;
    int mesh_exponent = 5;  // h = 2^-k

    double dt() const { return t_final / n_time_steps; }

    void validate() const {
        if (!(kappa > 0.0)) throw std::invalid_argument("ProblemSpec: kappa must be > 0");
        if (!(t_final > 0.0)) throw std::invalid_argument("ProblemSpec: t_final must be > 0");
        if (n_time_steps < 1) throw std::invalid_argument("ProblemSpec: nt must be >= 1");
        if (!(theta >= 0.0 && theta <= 1.0))
            throw std::invalid_argument("ProblemSpec: theta must be in [0, 1]");
    }
};

enum class SpatialSolverKind { pmg, cg };

struct SpatialSolverConfig {
    SpatialSolverKind kind = SpatialSolverKind::pmg;
    // Keeps the per-step solver floor two orders below the 1e-10 outer
    // halting tolerance; at looser settings the outer residual stalls on
    // spatial solver error before the halting test can fire.
    double rel_tol = 1e-12;
    int max_iter = 400;
    int pmg_fixed_cycles = 0;  // > 0: fixed cycle count instead of a tolerance
    PMultigridOptions pmg;
};

struct SolveStats {
    std::atomic<long long> solves{0};
    std::atomic<long long> iterations{0};

    void record(int iters) {
        solves.fetch_add(1, std::memory_order_relaxed);
        iterations.fetch_add(iters, std::memory_order_relaxed);
    }
};

/// One-step propagator of the theta scheme on a fixed time-step size:
/// (M + kappa dt theta K) u_next = (M - kappa dt (1-theta) K) u_prev + load.
/// The left-hand operator is inverted by the configured spatial solver; the
/// right-hand product is a plain matrix-vector product. Immutable after
/// construction, so steps on different states may run concurrently.
class ThetaStepper {
public:
    ThetaStepper(const SpatialDiscretization& disc, double kappa, double dt, double theta,
                 const SpatialSolverConfig& cfg)
        : disc_(&disc), cfg_(cfg), dt_(dt), theta_(theta), kappa_(kappa) {
        a_plus_ = sparse_add(1.0, disc.mass_p, kappa * dt * theta, disc.stiff_p);
        a_minus_ = sparse_add(1.0, disc.mass_p, -kappa * dt * (1.0 - theta), disc.stiff_p);
        if (cfg.kind == SpatialSolverKind::pmg)
            pmg_.emplace(disc, kappa * dt * theta, cfg.pmg);
        else
            cg_diag_ = diagonal_of(a_plus_);
    }

    double dt() const { return dt_; }
    const SparseMatrix& lhs() const { return a_plus_; }
    const SparseMatrix& rhs_op() const { return a_minus_; }
    const PMultigridHierarchy* pmg() const { return pmg_ ? &*pmg_ : nullptr; }

    /// Solve the left-hand operator against an arbitrary right-hand side.
    Vector solve_lhs(const Vector& rhs, Vector guess, SolveStats* stats = nullptr) const {
        if (cfg_.kind == SpatialSolverKind::pmg) {
            auto res = pmg_->solve(rhs, std::move(guess), cfg_.rel_tol, cfg_.max_iter,
                                   cfg_.pmg_fixed_cycles);
            if (stats) stats->record(res.iterations);
            if (!res.converged)
                throw std::runtime_error("spatial solve did not converge (p-multigrid), residual " +
                                         std::to_string(res.final_relative_residual));
            return std::move(res.x);
        }
        auto res = cg_solve(a_plus_, rhs, std::move(guess), cfg_.rel_tol, cfg_.max_iter, &cg_diag_);
        if (stats) stats->record(res.iterations);
        if (!res.converged)
            throw std::runtime_error("spatial solve did not converge (cg)");
        return std::move(res.x);
    }

    /// u_next from u_prev; `load` may be empty for the homogeneous step.
    /// `guess` seeds the iterative solve (the current value at the target
    /// point is the natural choice and makes converged points exact fixed
    /// points).
    Vector step(const Vector& u_prev, const Vector& load, Vector guess,
                SolveStats* stats = nullptr) const {
        Vector rhs = spmv(a_minus_, u_prev);
        if (!load.empty()) axpy(1.0, load, rhs);
        return solve_lhs(std::move(rhs), std::move(guess), stats);
    }

private:
    const SpatialDiscretization* disc_;
    SpatialSolverConfig cfg_;
    double dt_, theta_, kappa_;
    SparseMatrix a_plus_, a_minus_;
    std::optional<PMultigridHierarchy> pmg_;
    Vector cg_diag_;
};

/// Consistent-mass L2 projection of the initial condition onto the free
/// spline space.
inline Vector project_initial(const SpatialDiscretization& disc,
                              const std::function<double(double, double)>& u0,
                              ThreadPool* pool = nullptr) {
    if (!u0) return Vector(disc.dofmap_p.n_free, 0.0);
    const Vector full = assemble_load(disc.basis_p, disc.geom, u0, 0, pool);
    const Vector b = restrict_vector(disc.dofmap_p, full);
    const Vector diag = diagonal_of(disc.mass_p);
    auto res = cg_solve(disc.mass_p, b, {}, 1e-13, 2000, &diag);
    if (!res.converged) throw std::runtime_error("project_initial: mass solve did not converge");
    return std::move(res.x);
}

/// Per-level theta-weighted load terms
///     F_k = dt (theta f(t_k) + (1 - theta) f(t_{k-1})),   k = 1..steps,
/// reducing to dt f for a steady source (assembled once).
class LoadSchedule {
public:
    static LoadSchedule build(const SpatialDiscretization& disc, const SourceTerm& source,
                              double dt, double theta, int steps, ThreadPool* pool = nullptr) {
        LoadSchedule ls;
        ls.steps_ = steps;
        if (source.zero || !source.value) return ls;
        auto assemble_at = [&](double t) {
            const Vector full = assemble_load(
                disc.basis_p, disc.geom,
                [&](double x, double y) { return source.value(x, y, t); }, 0, pool);
            return restrict_vector(disc.dofmap_p, full);
        };
        if (!source.time_dependent) {
            ls.steady_ = assemble_at(0.0);
            scale(dt, *ls.steady_);
            return ls;
        }
        std::vector<Vector> at_points(steps + 1);
        for (int k = 0; k <= steps; ++k) at_points[k] = assemble_at(k * dt);
        ls.terms_.resize(steps + 1);
        for (int k = 1; k <= steps; ++k) {
            Vector f = at_points[k];
            scale(dt * theta, f);
            axpy(dt * (1.0 - theta), at_points[k - 1], f);
            ls.terms_[k] = std::move(f);
        }
        return ls;
    }

    bool empty() const { return !steady_ && terms_.empty(); }

    /// Load for the step arriving at time point k (1-based); empty vector
    /// when there is no source.
    const Vector& term(int k) const {
        static const Vector kEmpty;
        if (steady_) return *steady_;
        if (terms_.empty()) return kEmpty;
        return terms_[k];
    }

private:
    int steps_ = 0;
    std::optional<Vector> steady_;
    std::vector<Vector> terms_;
};

/// Block-forward solve of the space-time system: project the initial
/// condition, then march the theta scheme. This is the sequential oracle the
/// parallel-in-time solver must reproduce. Returns free-dof coefficients per
/// time point.
inline std::vector<Vector> sequential_integrate(const SpatialDiscretization& disc,
                                                const ProblemSpec& ps,
                                                const SpatialSolverConfig& scfg,
                                                SolveStats* stats = nullptr,
                                                ThreadPool* pool = nullptr) {
    ps.validate();
    const double dt = ps.dt();
    const ThetaStepper stepper(disc, ps.kappa, dt, ps.theta, scfg);
    const LoadSchedule loads = LoadSchedule::build(disc, ps.source, dt, ps.theta,
                                                   ps.n_time_steps, pool);
    std::vector<Vector> traj(ps.n_time_steps + 1);
    traj[0] = project_initial(disc, ps.initial, pool);
    for (int k = 1; k <= ps.n_time_steps; ++k) {
        try {
            traj[k] = stepper.step(traj[k - 1], loads.term(k), traj[k - 1], stats);
        } catch (const std::exception& e) {
            throw std::runtime_error("sequential_integrate: step " + std::to_string(k) + ": " +
                                     e.what());
        }
    }
    return traj;
}

}  // namespace miga
