#include <catch2/catch_amalgamated.hpp>

#include "miga/pmultigrid.hpp"
#include "test_support.hpp"

using namespace miga;

TEST_CASE("lumped-mass L2 transfer operators") {
    const auto g = GeometryMap::unit_square();
    const auto disc = SpatialDiscretization::build(g, 3, 4);

    SECTION("prolongation preserves constants (full dofs)") {
        const auto high = tensor_basis(3, 16);
        const auto low = tensor_basis(1, 16);
        const auto p_full = assemble_mixed_transfer(high, low, g);
        const auto lumped_p = lump_mass(assemble_mass(high, g));
        const Vector ones(p_full.n_cols, 1.0);
        Vector prolonged = spmv(p_full, ones);
        for (int i = 0; i < p_full.n_rows; ++i) prolonged[i] /= lumped_p[i];
        for (double v : prolonged) REQUIRE(v == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("restriction is the transpose of the same matrix") {
        PMultigridHierarchy h(disc, 0.01);
        auto gen = test_support::rng(41);
        const auto r = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const auto restricted = h.restrict_to_linear(r);
        const auto pt = disc.transfer_p1.transpose();
        Vector expect = spmv(pt, r);
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] *= disc.inv_lumped_1[i];
        REQUIRE(expect.size() == restricted.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            REQUIRE(restricted[i] == Catch::Approx(expect[i]).margin(1e-14));
    }

    SECTION("degenerate order-1 discretization uses the identity transfer") {
        const auto d1 = SpatialDiscretization::build(g, 1, 3);
        REQUIRE(d1.transfer_p1.nnz() == d1.dofmap_p.n_free);
        PMultigridHierarchy h(d1, 0.0);
        auto gen = test_support::rng(43);
        const auto v = test_support::random_vector(d1.dofmap_p.n_free, gen);
        REQUIRE(h.restrict_to_linear(v) == v);
        REQUIRE(h.prolong_from_linear(v) == v);
    }
}

TEST_CASE("h-level chain construction") {
    SECTION("h = 2^-5 coarsens down to 4 elements in 4 levels") {
        const auto disc = SpatialDiscretization::build(GeometryMap::unit_square(), 2, 5);
        REQUIRE(disc.h_chain.size() == 4);
        REQUIRE(disc.h_chain[0].n_elements == 32);
        REQUIRE(disc.h_chain[3].n_elements == 4);
    }
    SECTION("canonical embedding preserves constants (full dofs)") {
        const auto e = p1_embedding_full(8);
        const auto up = spmv(e, Vector(e.n_cols, 1.0));
        for (double v : up) REQUIRE(v == Catch::Approx(1.0).margin(1e-15));
    }
}

TEST_CASE("h-multigrid W-cycle") {
    SECTION("single-level hierarchy is the direct solver") {
        const auto disc = SpatialDiscretization::build(GeometryMap::unit_square(), 1, 2);
        REQUIRE(disc.h_chain.size() == 1);
        PMultigridHierarchy h(disc, 0.3);
        auto gen = test_support::rng(47);
        const auto b = test_support::random_vector(disc.dofmap_p.n_free, gen);
        Vector x(b.size(), 0.0);
        hmg_wcycle(h.hmg_levels(), 0, b, x);
        const auto exact = direct_solve(h.op(), b);
        for (std::size_t i = 0; i < x.size(); ++i)
            REQUIRE(x[i] == Catch::Approx(exact[i]).margin(1e-12));
    }

    SECTION("1D Poisson contraction factor at most 0.2 per cycle") {
        // Assembled independently of the 2D path: univariate p = 1 stiffness
        // on meshes 32, 16, 8, 4 with the interior nodes kept.
        std::vector<SparseMatrix> a_levels;
        std::vector<SparseMatrix> embeds;
        for (int nel : {32, 16, 8, 4}) {
            SparseMatrix m1, k1;
            test_support::assemble_1d(open_uniform_knots(1, nel, 0.0, 1.0), m1, k1);
            SparseBuilder free_b(nel - 1, nel - 1);
            for (int i = 1; i < nel; ++i)
                for (int j = 1; j < nel; ++j)
                    if (k1.get(i, j) != 0.0) free_b.set(i - 1, j - 1, k1.get(i, j));
            a_levels.push_back(free_b.build());
        }
        for (int nel : {32, 16, 8}) {
            const int nc = nel / 2;
            SparseBuilder eb(nel - 1, nc - 1);
            for (int i = 1; i < nel; ++i) {
                if (i % 2 == 0)
                    eb.set(i - 1, i / 2 - 1, 1.0);
                else {
                    if ((i - 1) / 2 >= 1) eb.set(i - 1, (i - 1) / 2 - 1, 0.5);
                    if ((i + 1) / 2 <= nc - 1) eb.set(i - 1, (i + 1) / 2 - 1, 0.5);
                }
            }
            embeds.push_back(eb.build());
        }
        const DenseLU coarse(a_levels.back());
        HmgLevels lv;
        for (const auto& a : a_levels) lv.a.push_back(&a);
        for (const auto& e : embeds) lv.embed.push_back(&e);
        lv.coarse_lu = &coarse;

        auto gen = test_support::rng(53);
        const auto& a = a_levels.front();
        const auto xstar = test_support::random_vector(a.n_rows, gen);
        const auto b = spmv(a, xstar);
        Vector x = test_support::random_vector(a.n_rows, gen);
        double prev = norm2(subtract(xstar, x));
        for (int cycle = 0; cycle < 4; ++cycle) {
            hmg_wcycle(lv, 0, b, x);
            const double err = norm2(subtract(xstar, x));
            REQUIRE(err <= 0.2 * prev);
            prev = err;
            if (err < 1e-13) break;
        }
    }
}

TEST_CASE("p-multigrid V-cycle") {
    const auto g = GeometryMap::unit_square();

    SECTION("exact solutions are fixed points") {
        const auto disc = SpatialDiscretization::build(g, 3, 4);
        PMultigridHierarchy h(disc, 0.1 * std::pow(2.0, -8));
        auto gen = test_support::rng(59);
        const auto xstar = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const auto b = spmv(h.op(), xstar);
        Vector x = xstar;
        h.vcycle(b, x);
        const double scale = norm2(xstar);
        for (std::size_t i = 0; i < x.size(); ++i)
            REQUIRE(x[i] == Catch::Approx(xstar[i]).margin(1e-12 * scale));
    }

    SECTION("error contraction at most 0.5 per cycle on the MGRIT-type operator") {
        const auto disc = SpatialDiscretization::build(g, 3, 5);
        PMultigridHierarchy h(disc, 0.1 * std::pow(2.0, -10));
        auto gen = test_support::rng(61);
        const auto xstar = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const auto b = spmv(h.op(), xstar);
        const auto exact = direct_solve(h.op(), b);
        Vector x = test_support::random_vector(disc.dofmap_p.n_free, gen);
        double e0 = norm2(subtract(exact, x));
        double ratio_product = 1.0;
        for (int cycle = 0; cycle < 5; ++cycle) {
            h.vcycle(b, x);
            const double e1 = norm2(subtract(exact, x));
            ratio_product *= e1 / e0;
            e0 = e1;
        }
        REQUIRE(std::pow(ratio_product, 1.0 / 5.0) <= 0.5);
    }

    SECTION("homogeneity") {
        const auto disc = SpatialDiscretization::build(g, 2, 4);
        PMultigridHierarchy h(disc, 0.05);
        auto gen = test_support::rng(67);
        const auto b = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const auto x0 = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const double alpha = -2.75;
        Vector x1 = x0;
        h.vcycle(b, x1);
        Vector bs = b, xs = x0;
        scale(alpha, bs);
        scale(alpha, xs);
        h.vcycle(bs, xs);
        for (std::size_t i = 0; i < x1.size(); ++i)
            REQUIRE(xs[i] == Catch::Approx(alpha * x1[i]).margin(1e-11 * std::abs(alpha) * norm2(x1)));
    }

    SECTION("with no smoothing and exact coarse solve the order-1 correction is idempotent") {
        const auto disc = SpatialDiscretization::build(g, 1, 2);  // one h-level, direct coarse
        PMultigridOptions opt;
        opt.nu_pre = opt.nu_post = 0;
        PMultigridHierarchy h(disc, 0.2, opt);
        auto gen = test_support::rng(71);
        const auto b = test_support::random_vector(disc.dofmap_p.n_free, gen);
        Vector once(b.size(), 0.0);
        h.vcycle(b, once);
        Vector twice = once;
        h.vcycle(b, twice);
        for (std::size_t i = 0; i < once.size(); ++i)
            REQUIRE(twice[i] == Catch::Approx(once[i]).margin(1e-12 * norm2(once)));
    }
}

TEST_CASE("pmg_solve") {
    const auto g = GeometryMap::unit_square();

    SECTION("zero right-hand side needs no iterations") {
        const auto disc = SpatialDiscretization::build(g, 2, 3);
        PMultigridHierarchy h(disc, 0.1);
        const auto res = h.solve(Vector(disc.dofmap_p.n_free, 0.0), {}, 1e-8, 50);
        REQUIRE(res.converged);
        REQUIRE(res.iterations == 0);
        REQUIRE(norm2(res.x) == 0.0);
    }

    SECTION("iteration counts are order-robust") {
        const double c = 0.1 / 256.0;  // kappa dt theta for the section-5 setup
        auto gen = test_support::rng(73);
        int min_it = 1 << 30, max_it = 0;
        for (int p : {2, 3, 4, 5}) {
            const auto disc = SpatialDiscretization::build(g, p, 5);
            PMultigridHierarchy h(disc, c);
            const auto b = test_support::random_vector(disc.dofmap_p.n_free, gen);
            const auto res = h.solve(b, {}, 1e-8, 100);
            REQUIRE(res.converged);
            min_it = std::min(min_it, res.iterations);
            max_it = std::max(max_it, res.iterations);
        }
        REQUIRE(max_it - min_it <= 2);
    }

    SECTION("solution matches the dense solver") {
        const auto disc = SpatialDiscretization::build(g, 3, 4);
        PMultigridHierarchy h(disc, 0.01);
        auto gen = test_support::rng(79);
        const auto b = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const auto res = h.solve(b, {}, 1e-8, 100);
        REQUIRE(res.converged);
        const auto exact = direct_solve(h.op(), b);
        REQUIRE(norm2(subtract(res.x, exact)) <= 1e-7 * norm2(exact));
    }

    SECTION("residual history tail is non-increasing") {
        const auto disc = SpatialDiscretization::build(g, 4, 5);
        PMultigridHierarchy h(disc, 1.0);  // stiffness-dominated, needs several cycles
        auto gen = test_support::rng(83);
        const auto b = test_support::random_vector(disc.dofmap_p.n_free, gen);
        const auto res = h.solve(b, {}, 1e-12, 100);
        REQUIRE(res.converged);
        const auto& hist = res.residual_history;
        const std::size_t tail = hist.size() > 5 ? hist.size() - 5 : 1;
        for (std::size_t i = tail; i < hist.size(); ++i) REQUIRE(hist[i] <= hist[i - 1]);
    }
}
