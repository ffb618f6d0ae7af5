#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "miga/assembly.hpp"
#include "miga/ilut.hpp"
#include "miga/solvers.hpp"
#include "miga/sparse.hpp"

namespace miga {

/// Rectangular submatrix over free rows/columns of two dof maps.
inline SparseMatrix take_submatrix(const SparseMatrix& a, const DofMap& rows, const DofMap& cols) {
    if (a.n_rows != rows.n_total || a.n_cols != cols.n_total)
        throw std::invalid_argument("take_submatrix: dimension mismatch");
    SparseMatrix r;
    r.n_rows = rows.n_free;
    r.n_cols = cols.n_free;
    r.row_offsets.assign(1, 0);
    for (int i = 0; i < rows.n_free; ++i) {
        const int g = rows.global_of_free[i];
        for (int e = a.row_offsets[g]; e < a.row_offsets[g + 1]; ++e) {
            const int jf = cols.free_of_global[a.col_indices[e]];
            if (jf >= 0) {
                r.col_indices.push_back(jf);
                r.values.push_back(a.values[e]);
            }
        }
        r.row_offsets.push_back(r.nnz());
    }
    return r;
}

/// Coefficient embedding of the order-1 spline space on a mesh of 2h into
/// the space on mesh h (full dofs): coincident nodes keep weight 1, midpoints
/// take 1/2 from each coarse neighbour.
inline SparseMatrix p1_embedding_full(int n_elements_fine) {
    if (n_elements_fine % 2 != 0)
        throw std::invalid_argument("p1_embedding_full: fine element count must be even");
    const int nf = n_elements_fine + 1;       // 1D fine nodes
    const int nc = n_elements_fine / 2 + 1;   // 1D coarse nodes
    auto entries_1d = [&](int i) {
        std::vector<std::pair<int, double>> e;
        if (i % 2 == 0)
            e.push_back({i / 2, 1.0});
        else {
            e.push_back({(i - 1) / 2, 0.5});
            e.push_back({(i + 1) / 2, 0.5});
        }
        return e;
    };
    SparseBuilder b(nf * nf, nc * nc);
    for (int iv = 0; iv < nf; ++iv) {
        const auto ev = entries_1d(iv);
        for (int iu = 0; iu < nf; ++iu) {
            const auto eu = entries_1d(iu);
            for (const auto& [jv, wv] : ev)
                for (const auto& [ju, wu] : eu) b.set(iu + nf * iv, ju + nc * jv, wu * wv);
        }
    }
    return b.build();
}

/// All mesh-dependent data for one (geometry, order, mesh) triple: free-dof
/// mass/stiffness at order p, the order-1 rediscretizations down the h-mesh
/// chain, the canonical embeddings between them, and the lumped-mass L2
/// transfer between order p and order 1. Time-step dependent operators are
/// formed later as M + c K, so one instance serves every MGRIT level.
struct SpatialDiscretization {
    GeometryMap geom;
    int degree = 2;
    int mesh_exponent = 5;
    int n_elements = 32;

    TensorBasis2D basis_p;
    DofMap dofmap_p;
    SparseMatrix mass_p, stiff_p;  // free dofs

    struct HLevel {
        int n_elements = 0;
        TensorBasis2D basis;
        DofMap dofmap;
        SparseMatrix mass, stiff;  // free dofs
        SparseMatrix embed;        // free coefficients, next-coarser -> this level; empty on coarsest
    };
    std::vector<HLevel> h_chain;   // [0] is the order-1 space on the fine mesh

    SparseMatrix transfer_p1;      // free; rows order p, cols order 1
    Vector inv_lumped_p;           // free entries of 1 / M^L at order p
    Vector inv_lumped_1;           // free entries of 1 / M^L at order 1

    static SpatialDiscretization build(const GeometryMap& geom, int degree, int mesh_exponent,
                                       ThreadPool* pool = nullptr) {
        if (degree < 1 || degree > 8)
            throw std::invalid_argument("SpatialDiscretization: degree must be in [1, 8]");
        if (mesh_exponent < 1)
            throw std::invalid_argument("SpatialDiscretization: mesh exponent must be >= 1");
        SpatialDiscretization d;
        d.geom = geom;
        d.degree = degree;
        d.mesh_exponent = mesh_exponent;
        d.n_elements = 1 << mesh_exponent;

        d.basis_p = tensor_basis(degree, d.n_elements);
        d.dofmap_p = DofMap::interior(d.basis_p);
        SparseMatrix mass_full, stiff_full;
        {
            auto sys = assemble_system(d.basis_p, geom, 0, pool);
            mass_full = std::move(sys.mass);
            stiff_full = std::move(sys.stiffness);
        }
        d.mass_p = eliminate_dirichlet(mass_full, d.dofmap_p);
        d.stiff_p = eliminate_dirichlet(stiff_full, d.dofmap_p);

        // order-1 chain: halve the mesh while it stays even and at least 8
        // elements per direction; the floor mesh goes to the direct solver.
        int nel = d.n_elements;
        for (;;) {
            HLevel hl;
            hl.n_elements = nel;
            hl.basis = tensor_basis(1, nel);
            hl.dofmap = DofMap::interior(hl.basis);
            auto sys = assemble_system(hl.basis, geom, 0, pool);
            hl.mass = eliminate_dirichlet(sys.mass, hl.dofmap);
            hl.stiff = eliminate_dirichlet(sys.stiffness, hl.dofmap);
            d.h_chain.push_back(std::move(hl));
            if (nel >= 8 && nel % 2 == 0)
                nel /= 2;
            else
                break;
        }
        for (std::size_t l = 0; l + 1 < d.h_chain.size(); ++l) {
            const SparseMatrix full = p1_embedding_full(d.h_chain[l].n_elements);
            d.h_chain[l].embed = take_submatrix(full, d.h_chain[l].dofmap, d.h_chain[l + 1].dofmap);
        }

        if (degree == 1) {
            // degenerate hierarchy: the high-order space is the order-1 space
            d.transfer_p1 = SparseMatrix::identity(d.dofmap_p.n_free);
            d.inv_lumped_p.assign(d.dofmap_p.n_free, 1.0);
            d.inv_lumped_1 = d.inv_lumped_p;
        } else {
            const SparseMatrix transfer_full =
                assemble_mixed_transfer(d.basis_p, d.h_chain[0].basis, geom);
            d.transfer_p1 = take_submatrix(transfer_full, d.dofmap_p, d.h_chain[0].dofmap);
            const Vector lumped_p = lump_mass(mass_full);
            const Vector lumped_1 = lump_mass(assemble_mass(d.h_chain[0].basis, geom, 0, pool));
            d.inv_lumped_p.resize(d.dofmap_p.n_free);
            for (int i = 0; i < d.dofmap_p.n_free; ++i)
                d.inv_lumped_p[i] = 1.0 / lumped_p[d.dofmap_p.global_of_free[i]];
            d.inv_lumped_1.resize(d.h_chain[0].dofmap.n_free);
            for (int i = 0; i < d.h_chain[0].dofmap.n_free; ++i)
                d.inv_lumped_1[i] = 1.0 / lumped_1[d.h_chain[0].dofmap.global_of_free[i]];
        }
        return d;
    }
};

struct PMultigridOptions {
    double ilut_tau = 1e-13;
    int ilut_fill = 0;  // 0 selects the operator's average row fill
    int nu_pre = 1;     // ILUT smoothing steps at order p
    int nu_post = 1;
    int gs_pre = 2;     // Gauss-Seidel sweeps inside the h-multigrid W-cycle
    int gs_post = 2;
};

/// Fine-to-coarse stack for the order-1 h-multigrid; usable for any nested
/// operator chain (the tests also drive it with 1D discretizations).
struct HmgLevels {
    std::vector<const SparseMatrix*> a;
    std::vector<const SparseMatrix*> embed;  // embed[l]: level l+1 coefficients -> level l
    const DenseLU* coarse_lu = nullptr;
    int gs_pre = 2;
    int gs_post = 2;
};

/// One W-cycle on level l: forward Gauss-Seidel presmoothing, residual
/// restriction through the embedding transpose, two recursive coarse visits,
/// canonical prolongation, backward postsmoothing. The coarsest level is
/// solved directly.
inline void hmg_wcycle(const HmgLevels& lv, int level, const Vector& b, Vector& x) {
    if (level + 1 == static_cast<int>(lv.a.size())) {
        x = lv.coarse_lu->solve(b);
        return;
    }
    const SparseMatrix& a = *lv.a[level];
    for (int s = 0; s < lv.gs_pre; ++s) gauss_seidel_sweep(a, b, x, SweepDirection::forward);
    const Vector r = subtract(b, spmv(a, x));
    Vector rc;
    spmv_transpose(*lv.embed[level], r, rc);
    Vector ec(rc.size(), 0.0);
    hmg_wcycle(lv, level + 1, rc, ec);
    hmg_wcycle(lv, level + 1, rc, ec);
    const Vector up = spmv(*lv.embed[level], ec);
    axpy(1.0, up, x);
    for (int s = 0; s < lv.gs_post; ++s) gauss_seidel_sweep(a, b, x, SweepDirection::backward);
}

struct SpatialSolveResult {
    Vector x;
    int iterations = 0;
    bool converged = false;
    double final_relative_residual = 0.0;
    std::vector<double> residual_history;  // relative, one entry per cycle
};

/// The order-p solver: ILUT-smoothed correction scheme that restricts the
/// residual directly to order 1, runs a single W-cycle of h-multigrid there,
/// and prolongates the error back. One instance is built per spatial
/// operator M + c K and is immutable afterwards; solves from many threads
/// may share it.
class PMultigridHierarchy {
public:
    PMultigridHierarchy(const SpatialDiscretization& disc, double c, PMultigridOptions opt = {})
        : disc_(&disc), opt_(opt) {
        a_p_ = sparse_add(1.0, disc.mass_p, c, disc.stiff_p);
        smoother_ = ilut_factor(a_p_, opt.ilut_tau, opt.ilut_fill);
        a_h_.reserve(disc.h_chain.size());
        for (const auto& hl : disc.h_chain) a_h_.push_back(sparse_add(1.0, hl.mass, c, hl.stiff));
        coarse_lu_ = DenseLU(a_h_.back());
    }

    const SparseMatrix& op() const { return a_p_; }
    const IlutFactors& smoother() const { return smoother_; }
    int n_h_levels() const { return static_cast<int>(a_h_.size()); }

    HmgLevels hmg_levels() const {
        HmgLevels lv;
        for (const auto& a : a_h_) lv.a.push_back(&a);
        for (std::size_t l = 0; l + 1 < disc_->h_chain.size(); ++l)
            lv.embed.push_back(&disc_->h_chain[l].embed);
        lv.coarse_lu = &coarse_lu_;
        lv.gs_pre = opt_.gs_pre;
        lv.gs_post = opt_.gs_post;
        return lv;
    }

    /// (M^L_1)^{-1} (P^p_1)^T r, entrywise on free dofs.
    Vector restrict_to_linear(const Vector& r_p) const {
        Vector r1;
        spmv_transpose(disc_->transfer_p1, r_p, r1);
        for (std::size_t i = 0; i < r1.size(); ++i) r1[i] *= disc_->inv_lumped_1[i];
        return r1;
    }

    /// (M^L_p)^{-1} P^p_1 e_1.
    Vector prolong_from_linear(const Vector& e1) const {
        Vector ep = spmv(disc_->transfer_p1, e1);
        for (std::size_t i = 0; i < ep.size(); ++i) ep[i] *= disc_->inv_lumped_p[i];
        return ep;
    }

    void vcycle(const Vector& b, Vector& x) const {
        Vector r(b.size()), z(b.size());
        for (int s = 0; s < opt_.nu_pre; ++s) smooth(b, x, r, z);
        spmv(a_p_, x, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
        Vector r1 = restrict_to_linear(r);
        Vector e1(r1.size(), 0.0);
        hmg_wcycle(hmg_levels(), 0, r1, e1);
        const Vector ep = prolong_from_linear(e1);
        axpy(1.0, ep, x);
        for (int s = 0; s < opt_.nu_post; ++s) smooth(b, x, r, z);
    }

    /// Repeated V-cycles until ||b - A x|| <= rel_tol ||b||; fixed_cycles > 0
    /// runs exactly that many cycles instead.
    SpatialSolveResult solve(const Vector& b, Vector x0, double rel_tol, int max_iter,
                             int fixed_cycles = 0) const {
        SpatialSolveResult res;
        const double bnorm = norm2(b);
        if (bnorm == 0.0) {
            res.x.assign(a_p_.n_rows, 0.0);
            res.converged = true;
            return res;
        }
        if (x0.empty()) x0.assign(a_p_.n_rows, 0.0);
        res.x = std::move(x0);
        if (fixed_cycles > 0) {
            for (int it = 0; it < fixed_cycles; ++it) vcycle(b, res.x);
            res.iterations = fixed_cycles;
            res.final_relative_residual = norm2(subtract(b, spmv(a_p_, res.x))) / bnorm;
            res.converged = true;
            return res;
        }
        double rel = norm2(subtract(b, spmv(a_p_, res.x))) / bnorm;
        if (rel <= rel_tol) {
            res.converged = true;
            res.final_relative_residual = rel;
            return res;
        }
        for (int it = 1; it <= max_iter; ++it) {
            vcycle(b, res.x);
            rel = norm2(subtract(b, spmv(a_p_, res.x))) / bnorm;
            res.iterations = it;
            res.residual_history.push_back(rel);
            if (rel <= rel_tol) {
                res.converged = true;
                break;
            }
        }
        res.final_relative_residual = rel;
        return res;
    }

private:
    // x += S (b - A x) with S the ILUT application
    void smooth(const Vector& b, Vector& x, Vector& r, Vector& z) const {
        spmv(a_p_, x, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
        ilut_apply(smoother_, r, z);
        axpy(1.0, z, x);
    }

    const SpatialDiscretization* disc_;
    PMultigridOptions opt_;
    SparseMatrix a_p_;
    IlutFactors smoother_;
    std::vector<SparseMatrix> a_h_;
    DenseLU coarse_lu_;
};

}  // namespace miga
