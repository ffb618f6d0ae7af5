#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "miga/bench.hpp"

using namespace miga;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// strip the wall_seconds column (index 12) for determinism comparisons
std::string without_wall(const std::string& csv_line) {
    std::string out;
    int field = 0;
    for (char c : csv_line) {
        if (c == ',') ++field;
        if (field == 12 && c != ',') continue;
        out += c;
    }
    return out;
}

}  // namespace

TEST_CASE("parse_config") {
    SECTION("defaults are the model-problem setup") {
        const auto bp = parse_config({});
        REQUIRE(bp.problem.geometry.kind == GeometryMap::Kind::unit_square);
        REQUIRE(bp.problem.theta == 1.0);
        REQUIRE(bp.problem.kappa == 1.0);
        REQUIRE(bp.problem.t_final == 0.1);
        REQUIRE(bp.mgrit.halt_tol == 1e-10);
        REQUIRE(bp.mgrit.m == 2);
        REQUIRE(bp.experiment.kind == ExperimentKind::solve);
        REQUIRE(bp.spatial.kind == SpatialSolverKind::pmg);
    }
    SECTION("crank-nicolson flag") {
        const auto bp = parse_config({"--theta", "0.5"});
        REQUIRE(bp.problem.theta == 0.5);
    }
    SECTION("indivisible time grid is a usage error naming the keys") {
        try {
            parse_config({"--m", "3", "--nt", "100"});
            FAIL("expected UsageError");
        } catch (const UsageError& e) {
            const std::string msg = e.what();
            REQUIRE(msg.find("--nt") != std::string::npos);
            REQUIRE(msg.find("--m") != std::string::npos);
        }
    }
    SECTION("unknown keys are rejected") {
        REQUIRE_THROWS_AS(parse_config({"--does-not-exist", "1"}), UsageError);
        REQUIRE_THROWS_AS(parse_config({"--theta", "banana"}), UsageError);
        REQUIRE_THROWS_AS(parse_config({"--geometry", "cube"}), UsageError);
    }
    SECTION("config file supplies values, flags win") {
        const auto cfg = temp_file("miga_test_config.ini");
        {
            std::ofstream out(cfg);
            out << "theta=0.5\nnt=32\nm=2\n";
        }
        const auto from_file = parse_config({"--config", cfg.string()});
        REQUIRE(from_file.problem.theta == 0.5);
        REQUIRE(from_file.problem.n_time_steps == 32);
        const auto overridden = parse_config({"--config", cfg.string(), "--theta", "1"});
        REQUIRE(overridden.problem.theta == 1.0);
        std::filesystem::remove(cfg);
    }
}

TEST_CASE("run_experiment") {
    SECTION("single solve with one time step") {
        auto bp = parse_config({"--nt", "1", "--p", "2", "--k", "3"});
        const auto rep = run_experiment(bp);
        REQUIRE(rep.rows.size() == 1);
        REQUIRE(rep.rows[0].mgrit_iters == 1);
        REQUIRE(rep.all_converged);
    }

    SECTION("table over time steps: four rows, iterations constant across p") {
        auto bp = parse_config({"--experiment", "table-nt", "--p-grid", "2,3", "--nt-grid",
                                "16,32", "--k", "3"});
        const auto rep = run_experiment(bp);
        REQUIRE(rep.rows.size() == 4);
        for (int nt : {16, 32}) {
            int first = -1;
            for (const auto& r : rep.rows)
                if (r.nt == nt) {
                    if (first < 0) first = r.mgrit_iters;
                    REQUIRE(r.mgrit_iters == first);
                }
        }
        REQUIRE(rep.table_text.find("MGRIT iterations") != std::string::npos);
    }

    SECTION("sweep rows are reproduced by individual solves") {
        auto sweep = parse_config({"--experiment", "table-nt", "--p-grid", "2", "--nt-grid",
                                   "16,32", "--k", "3"});
        const auto rep = run_experiment(sweep);
        for (const auto& row : rep.rows) {
            auto single = parse_config({"--p", "2", "--k", "3", "--nt", std::to_string(row.nt)});
            const auto one = run_experiment(single);
            REQUIRE(one.rows.size() == 1);
            REQUIRE(one.rows[0].mgrit_iters == row.mgrit_iters);
            REQUIRE(one.rows[0].final_rel_residual == row.final_rel_residual);
        }
    }

    SECTION("csv output is deterministic apart from wall time") {
        const auto out1 = temp_file("miga_det_1.csv");
        const auto out2 = temp_file("miga_det_2.csv");
        for (const auto& out : {out1, out2}) {
            auto bp = parse_config({"--nt", "8", "--p", "2", "--k", "3", "--out", out.string()});
            write_report(run_experiment(bp), bp.experiment.out_path);
        }
        const auto l1 = read_lines(out1);
        const auto l2 = read_lines(out2);
        REQUIRE(l1.size() == l2.size());
        for (std::size_t i = 0; i < l1.size(); ++i) REQUIRE(without_wall(l1[i]) == without_wall(l2[i]));
        std::filesystem::remove(out1);
        std::filesystem::remove(out2);
        std::filesystem::remove(temp_file("miga_det_1.txt"));
        std::filesystem::remove(temp_file("miga_det_2.txt"));
    }
}

TEST_CASE("run_main exit codes") {
    const auto out = temp_file("miga_cli_run.csv");
    SECTION("successful solve returns 0 and writes both files") {
        const std::string out_str = out.string();
        const char* argv[] = {"miga-bench", "--nt", "4",  "--p", "2",
                              "--k",        "3",    "--out", out_str.c_str()};
        REQUIRE(run_main(9, argv) == 0);
        REQUIRE(std::filesystem::exists(out));
        auto txt = out;
        txt.replace_extension(".txt");
        REQUIRE(std::filesystem::exists(txt));
        const auto lines = read_lines(out);
        REQUIRE(lines.size() == 2);
        REQUIRE(lines[0] == csv_header());
        std::filesystem::remove(out);
        std::filesystem::remove(txt);
    }
    SECTION("non-converged runs return 2") {
        const std::string out_str = out.string();
        const char* argv[] = {"miga-bench", "--nt", "16", "--p", "2", "--k", "3",
                              "--max-iter", "1", "--out", out_str.c_str()};
        REQUIRE(run_main(11, argv) == 2);
        std::filesystem::remove(out);
        auto txt = out;
        txt.replace_extension(".txt");
        std::filesystem::remove(txt);
    }
    SECTION("usage errors return 1") {
        const char* argv[] = {"miga-bench", "--no-such-flag"};
        REQUIRE(run_main(2, argv) == 1);
        const char* argv2[] = {"miga-bench", "--m", "3", "--nt", "100"};
        REQUIRE(run_main(5, argv2) == 1);
    }
    SECTION("help returns 0") {
        const char* argv[] = {"miga-bench", "--help"};
        REQUIRE(run_main(2, argv) == 0);
    }
}
