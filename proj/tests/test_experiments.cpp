// Experiment driver and storage: config parsing, data synthesis, run
// equivalences, on-disk round trips, and the self-check reader.
#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <mhdm/experiments.hpp>

#include "support/oracles.hpp"

using namespace mhdm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("mhdm-tests-" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

ExperimentConfig config_from(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("noise realizations have the exact requested norm and are reproducible") {
    Vec e = make_noise(100, 0.05, 7);
    CHECK(e.norm() == Catch::Approx(0.05).margin(1e-12));
    Vec e2 = make_noise(100, 0.05, 7);
    CHECK((e - e2).norm() == 0.0);

    Vec other = make_noise(100, 0.05, 8);
    CHECK((e - other).norm() > 1e-3);

    CHECK(make_noise(64, 0.0, 3).norm() == 0.0);

    // odd length exercises the unpaired tail sample
    Vec odd = make_noise(7, 1.0, 11);
    CHECK(odd.norm() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ground truth generators produce the documented shapes") {
    Vec tb = ground_truth_tv_two_blocks(100);
    int ones = 0, halves = 0, zeros = 0;
    for (int i = 0; i < 100; ++i) {
        if (tb[i] == 1.0) ++ones;
        else if (tb[i] == 0.5) ++halves;
        else if (tb[i] == 0.0) ++zeros;
    }
    CHECK(ones == 20);
    CHECK(halves == 4);
    CHECK(zeros == 76);
    CHECK(tb[30] == 1.0);
    CHECK(tb[49] == 1.0);
    CHECK(tb[29] == 0.0);
    CHECK(tb[50] == 0.0);
    CHECK(tb[68] == 0.5);
    CHECK(tb[71] == 0.5);

    Vec sp = ground_truth_sparse_peaks(100);
    int nonzero = 0;
    for (int i = 0; i < 100; ++i)
        if (sp[i] != 0.0) ++nonzero;
    CHECK(nonzero == 7);
    CHECK(sp[static_cast<int>(std::lround(0.35 * 99))] == 2.5);

    Vec c = ground_truth_constant(10, 0.2);
    CHECK(c.minCoeff() == 0.2);
    CHECK(c.maxCoeff() == 0.2);
}

TEST_CASE("config parser round trips every key") {
    auto c = config_from(
        "# full configuration\n"
        "name = demo\n"
        "variant = flexible\n"
        "operator = gaussian\n"
        "operator.sigma = 0.05\n"
        "n = 80\n"
        "penalty = lp\n"
        "penalty.p = 0.5\n"
        "flexible.rule = increasing-p\n"
        "lambda0 = 2\n"
        "ratio = 4\n"
        "stopping = discrepancy\n"
        "stopping.tau = 1.05\n"
        "stopping.max = 40\n"
        "truth = sparse-peaks\n"
        "noise.delta = 0.05\n"
        "noise.seed = 9\n"
        "tikhonov.sweep = true\n"
        "solver.max_iter = 900\n"
        "solver.tol = 1e-9\n");
    CHECK(c.name == "demo");
    CHECK(c.variant == Variant::Flexible);
    CHECK(c.op_kind == "gaussian");
    CHECK(c.op_sigma == 0.05);
    CHECK(c.n == 80);
    CHECK(c.penalty_kind == "lp");
    CHECK(c.penalty_p == 0.5);
    CHECK(c.flexible_rule == "increasing-p");
    CHECK(c.lambda0 == 2.0);
    CHECK(c.ratio == 4.0);
    CHECK(c.stopping == "discrepancy");
    CHECK(c.tau == 1.05);
    CHECK(c.max_index == 40);
    CHECK(c.truth_kind == "sparse-peaks");
    CHECK(c.delta == 0.05);
    REQUIRE(c.seed.has_value());
    CHECK(*c.seed == 9);
    CHECK(c.tikhonov_sweep);
    CHECK(c.max_iter == 900);
    REQUIRE(c.tol.has_value());
    CHECK(*c.tol == 1e-9);
}

TEST_CASE("config parser reports malformed input with line numbers") {
    auto message = [](const std::string& text) {
        try {
            config_from(text);
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };

    CHECK_THAT(message("name = a\nnonsense line\n"),
               Catch::Matchers::ContainsSubstring("line 2") &&
                   Catch::Matchers::ContainsSubstring("expected key = value"));
    CHECK_THAT(message(" = 3\n"), Catch::Matchers::ContainsSubstring("empty key or value"));
    CHECK_THAT(message("n = 10\nn = 11\n"),
               Catch::Matchers::ContainsSubstring("duplicate key 'n'"));
    CHECK_THAT(message("frobnicate = yes\n"),
               Catch::Matchers::ContainsSubstring("unknown key 'frobnicate'"));
    CHECK_THAT(message("tikhonov.sweep = maybe\n"),
               Catch::Matchers::ContainsSubstring("boolean"));

    // comments and blank lines are ignored, inline comments stripped
    auto ok = config_from("\n# header\nn = 12   # trailing\n\n");
    CHECK(ok.n == 12);
}

TEST_CASE("lambda.list parses comma separated values and overrides the geometric schedule") {
    auto c = config_from("lambda.list = 1, 2.5, 10\nstopping.count = 2\n");
    REQUIRE(c.lambda_list.size() == 3);
    CHECK(c.lambda_list[1] == 2.5);

    auto r = run_experiment(c);
    REQUIRE(r.decomposition.lambdas.size() == 3);
    CHECK(r.decomposition.lambdas[2] == 10.0);

    auto bad = config_from("lambda.list = 1, 2\nstopping.count = 2\n");
    CHECK_THROWS_WITH(run_experiment(bad),
                      Catch::Matchers::ContainsSubstring("stopping.count exceeds lambda.list length"));
}

TEST_CASE("noisy runs demand an explicit seed") {
    auto c = config_from("noise.delta = 0.05\n");
    CHECK_THROWS_WITH(run_experiment(c),
                      Catch::Matchers::ContainsSubstring("noise.seed required when noise.delta > 0"));
    CHECK(run_experiment(config_from("noise.delta = 0\n")).f_noisy.size() > 0);
}

TEST_CASE("run_experiment validates sizes and enum values") {
    CHECK_THROWS(run_experiment(config_from("n = 1\n")));
    CHECK_THROWS(run_experiment(config_from("operator = warp\n")));
    CHECK_THROWS(run_experiment(config_from("penalty = l7\n")));
    CHECK_THROWS(run_experiment(config_from("truth = staircase\n")));
    CHECK_THROWS(run_experiment(config_from("variant = flexible\nflexible.rule = sideways-p\n")));
    CHECK_THROWS(run_experiment(config_from("stopping = sometimes\n")));
}

TEST_CASE("the driver reproduces a hand-assembled run exactly") {
    auto c = config_from(
        "variant = mhdm\n"
        "operator = identity\n"
        "n = 60\n"
        "penalty = l1\n"
        "lambda0 = 1\n"
        "ratio = 2\n"
        "stopping = fixed\n"
        "stopping.count = 8\n"
        "truth = sparse-peaks\n");
    auto r = run_experiment(c);

    Vec truth = ground_truth_sparse_peaks(60);
    auto direct = run_mhdm(Penalty::l1(), LinearMap::identity(60), Signal(truth),
                           LambdaSchedule::geometric(1.0, 2.0), StoppingRule::fixed_count(8));
    REQUIRE(r.decomposition.steps() == direct.steps());
    for (std::size_t k = 0; k < direct.steps(); ++k)
        CHECK((r.decomposition.components[k] - direct.components[k]).norm() == 0.0);
    CHECK((r.f_clean - truth).norm() == 0.0);
    CHECK((r.f_noisy - truth).norm() == 0.0);
    CHECK(r.tikhonov_solutions.empty());
}

TEST_CASE("the single step sweep matches direct subproblem solves in the interval norm") {
    auto c = config_from(
        "operator = gaussian\n"
        "operator.sigma = 0.025\n"
        "n = 50\n"
        "penalty = l1\n"
        "lambda0 = 1\n"
        "ratio = 2\n"
        "stopping = fixed\n"
        "stopping.count = 4\n"
        "truth = sparse-peaks\n"
        "tikhonov.sweep = true\n");
    auto r = run_experiment(c);
    REQUIRE(r.tikhonov_errors.size() == 5);
    REQUIRE(r.tikhonov_residuals.size() == 5);

    double h = 1.0 / 50;
    SolveOptions opts;
    opts.max_iter = 20000;
    opts.tol = 1e-12;
    for (int k = 0; k <= 4; ++k) {
        double lam = std::pow(2.0, k);
        auto one = solve_subproblem(Penalty::l1(), r.op, Signal(r.f_noisy, h), lam, opts);
        double en = std::sqrt(h) * (r.decomposition.partial_sums[k] - one.minimizer).norm();
        CHECK(r.tikhonov_errors[k] == Catch::Approx(en).margin(1e-6));
        double rn = (r.op.apply(one.minimizer) - r.f_noisy).norm();
        CHECK(r.tikhonov_residuals[k] == Catch::Approx(rn).margin(1e-6));
    }
    CHECK_FALSE(r.tikhonov_stop_index.has_value());
}

TEST_CASE("sweep discrepancy index marks the first residual below the threshold") {
    auto c = config_from(
        "name = sweep-stop\n"
        "operator = identity\n"
        "n = 100\n"
        "penalty = l1\n"
        "stopping = discrepancy\n"
        "stopping.tau = 1.01\n"
        "stopping.max = 30\n"
        "truth = sparse-peaks\n"
        "noise.delta = 0.05\n"
        "noise.seed = 1\n"
        "tikhonov.sweep = true\n");
    auto r = run_experiment(c);
    REQUIRE(r.decomposition.stop_index.has_value());
    REQUIRE(r.tikhonov_stop_index.has_value());
    double thr = 1.01 * 0.05 * 0.05;
    int s = *r.tikhonov_stop_index;
    CHECK(r.tikhonov_residuals[s] * r.tikhonov_residuals[s] < thr);
    for (int k = 0; k < s; ++k)
        CHECK(r.tikhonov_residuals[k] * r.tikhonov_residuals[k] >= thr);
}

TEST_CASE("written runs pass the stored-run self check and survive tampering detection") {
    fs::path dir = fresh_dir("roundtrip");
    auto c = config_from(
        "name = rt\n"
        "operator = gaussian\n"
        "operator.sigma = 0.05\n"
        "n = 60\n"
        "penalty = tv\n"
        "lambda0 = 1\n"
        "ratio = 4\n"
        "stopping = fixed\n"
        "stopping.count = 6\n"
        "truth = tv-two-blocks\n"
        "noise.delta = 0.01\n"
        "noise.seed = 5\n");
    auto r = run_experiment(c);
    write_experiment(r, dir);

    std::string prefix = (dir / "rt").string();
    CHECK(fs::exists(dir / "rt-meta.txt"));
    CHECK(fs::exists(dir / "rt-iters.csv"));
    CHECK(fs::exists(dir / "rt-signals.csv"));

    auto failures = check_decomposition(prefix);
    for (const auto& f : failures) UNSCOPED_INFO(f);
    CHECK(failures.empty());

    // noisy data column is present and carries the noise realization
    auto signals = io::read_table(dir / "rt-signals.csv");
    REQUIRE(io::has_column(signals, "f_noisy"));
    Vec noisy = io::column_as_vec(signals, "f_noisy");
    CHECK((noisy - r.f_noisy).norm() == 0.0);

    // corrupt one residual entry: the self check must notice
    auto iters = io::read_table(dir / "rt-iters.csv");
    std::size_t col = 0;
    while (iters.names[col] != "residual_norm") ++col;
    iters.columns[col][2] = "999";
    std::ostringstream os;
    iters.write(os);
    io::write_file(dir / "rt-iters.csv", os.str());
    CHECK_FALSE(check_decomposition(prefix).empty());

    fs::remove_all(dir);
}

TEST_CASE("noise-free runs store the clean data column only") {
    fs::path dir = fresh_dir("clean");
    auto c = config_from(
        "name = cl\n"
        "n = 40\n"
        "penalty = l1\n"
        "stopping.count = 5\n"
        "truth = sparse-peaks\n");
    auto r = run_experiment(c);
    write_experiment(r, dir);

    auto signals = io::read_table(dir / "cl-signals.csv");
    CHECK_FALSE(io::has_column(signals, "f_noisy"));
    REQUIRE(io::has_column(signals, "f_clean"));
    CHECK(check_decomposition((dir / "cl").string()).empty());
    fs::remove_all(dir);
}

TEST_CASE("identical configs write byte-identical artifacts") {
    fs::path a = fresh_dir("det-a");
    fs::path b = fresh_dir("det-b");
    auto c = config_from(
        "name = det\n"
        "operator = gaussian\n"
        "operator.sigma = 0.025\n"
        "n = 80\n"
        "penalty = l1\n"
        "stopping = discrepancy\n"
        "stopping.tau = 1.01\n"
        "stopping.max = 25\n"
        "truth = sparse-peaks\n"
        "noise.delta = 0.05\n"
        "noise.seed = 1\n"
        "tikhonov.sweep = true\n");
    write_experiment(run_experiment(c), a);
    write_experiment(run_experiment(c), b);
    for (const char* suffix : {"det-meta.txt", "det-iters.csv", "det-signals.csv"}) {
        CHECK(slurp(a / suffix) == slurp(b / suffix));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("solver class reported in metadata matches the dispatch rules") {
    const LinearMap ident = LinearMap::identity(8);
    const LinearMap conv = make_gaussian_conv(8, 0.5);

    CHECK(uses_exact_solver(Variant::IteratedTikhonov, Penalty::l1(), conv));
    CHECK(uses_exact_solver(Variant::Mhdm, Penalty::quadratic(), conv));
    CHECK_FALSE(uses_exact_solver(Variant::Mhdm, Penalty::l1(), conv));
    CHECK(uses_exact_solver(Variant::Mhdm, Penalty::l1(), ident));
    CHECK(uses_exact_solver(Variant::Mhdm, Penalty::tv1d(), ident));
    CHECK(uses_exact_solver(Variant::Tight, Penalty::l1(), ident));
    CHECK_FALSE(uses_exact_solver(Variant::Tight, Penalty::lp(0.5), ident));
    CHECK(uses_exact_solver(Variant::Bregman, Penalty::l1(), ident));
    CHECK(uses_exact_solver(Variant::Flexible, Penalty::lp(0.5), ident));

    CHECK(identity_residual_tolerance(true) == 1e-10);
    CHECK(identity_residual_tolerance(false) == 1e-4);
}

TEST_CASE("meta files capture the config echo and summary statistics") {
    fs::path dir = fresh_dir("meta");
    auto c = config_from(
        "name = m\n"
        "n = 50\n"
        "penalty = l1\n"
        "stopping = discrepancy\n"
        "stopping.tau = 1.01\n"
        "stopping.max = 30\n"
        "truth = sparse-peaks\n"
        "noise.delta = 0.05\n"
        "noise.seed = 2\n"
        "tikhonov.sweep = true\n");
    auto r = run_experiment(c);
    write_experiment(r, dir);
    auto meta = io::read_meta(dir / "m-meta.txt");
    CHECK(meta.get("name") == "m");
    CHECK(meta.get("penalty") == "l1");
    CHECK(io::parse_double(meta.get("noise.delta")) == 0.05);
    CHECK(io::parse_double(meta.get("mhdm_rel_error")) ==
          Catch::Approx(r.mhdm_rel_error()).margin(1e-14));
    REQUIRE(meta.has("tikhonov_rel_error"));
    CHECK(io::parse_double(meta.get("tikhonov_rel_error")) ==
          Catch::Approx(*r.tikhonov_rel_error()).margin(1e-14));
    CHECK(meta.has("stop_index"));
    fs::remove_all(dir);
}

TEST_CASE("numeric text round trips exactly") {
    for (double v : {3.141592653589793, 0.1, -1e-300, 6.02214076e23, 0.0, -0.0, 1.0 / 3.0}) {
        CHECK(io::parse_double(io::format_double(v)) == v);
    }
    CHECK_THROWS(io::parse_double("12abc"));
    CHECK_THROWS(io::parse_double(""));
}

TEST_CASE("tables round trip through text including ragged columns") {
    io::Table t;
    t.add("alpha", std::vector<double>{1.0, 2.5, -3.0});
    t.add("beta", std::vector<double>{0.1});
    std::ostringstream os;
    t.write(os);

    fs::path dir = fresh_dir("table");
    io::write_file(dir / "t.csv", os.str());
    auto back = io::read_table(dir / "t.csv");
    REQUIRE(back.names == std::vector<std::string>{"alpha", "beta"});
    auto alpha = io::column_as_doubles(back, "alpha");
    auto beta = io::column_as_doubles(back, "beta");
    CHECK(alpha == std::vector<double>{1.0, 2.5, -3.0});
    CHECK(beta == std::vector<double>{0.1});
    CHECK_THROWS(io::column_as_doubles(back, "gamma"));
    fs::remove_all(dir);
}

TEST_CASE("matrix reader accepts mixed separators and comments") {
    fs::path dir = fresh_dir("matrix");
    io::write_file(dir / "m.csv", "# demo\n2, 1\n1\t0\n");
    Mat A = io::read_matrix_csv(dir / "m.csv");
    REQUIRE(A.rows() == 2);
    REQUIRE(A.cols() == 2);
    CHECK(A(0, 0) == 2.0);
    CHECK(A(1, 1) == 0.0);

    io::write_file(dir / "ragged.csv", "1 2\n3\n");
    CHECK_THROWS(io::read_matrix_csv(dir / "ragged.csv"));
    io::write_file(dir / "empty.csv", "# nothing\n");
    CHECK_THROWS(io::read_matrix_csv(dir / "empty.csv"));
    fs::remove_all(dir);
}

TEST_CASE("matrix operators load from file through the config") {
    fs::path dir = fresh_dir("opfile");
    io::write_file(dir / "op.csv", "2 1\n1 0\n");
    auto c = config_from("operator = matrix\noperator.file = " + (dir / "op.csv").string() +
                         "\nn = 2\npenalty = l1\nstopping.count = 3\ntruth = constant\n"
                         "truth.value = 0.4\n");
    auto r = run_experiment(c);
    CHECK(r.op.rows() == 2);
    CHECK((r.f_clean - r.op.apply(r.truth)).norm() == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("the preset catalog covers the standard study grids") {
    auto& names = preset_names();
    REQUIRE(names.size() == 7);
    CHECK(names[0] == "table1-denoise");
    CHECK_THROWS(preset_experiments("table9"));

    auto denoise = preset_experiments("table1-denoise");
    REQUIRE(denoise.size() == 1);
    CHECK(denoise[0].penalty_kind == "tv");
    CHECK(denoise[0].op_kind == "identity");
    CHECK(denoise[0].count == 11);
    CHECK(denoise[0].stopping == "fixed");

    auto deblur = preset_experiments("table1-deblur");
    REQUIRE(deblur.size() == 1);
    CHECK(deblur[0].op_kind == "gaussian");
    CHECK(deblur[0].op_sigma == 0.1);
    CHECK(deblur[0].count == 11);

    auto noise_sweep = preset_experiments("table2-noise-sweep");
    REQUIRE(noise_sweep.size() == 3);
    CHECK(noise_sweep[0].delta == preset_delta_small);
    CHECK(noise_sweep[1].delta == preset_delta_medium);
    CHECK(noise_sweep[2].delta == preset_delta_large);
    for (const auto& cell : noise_sweep) {
        CHECK(cell.penalty_kind == "l1");
        CHECK(cell.tikhonov_sweep);
        CHECK(cell.stopping == "discrepancy");
        REQUIRE(cell.seed.has_value());
    }

    CHECK(preset_experiments("table3-lambda0-sweep").size() == 4);
    CHECK(preset_experiments("table4-ratio-sweep").size() == 4);
    auto psweep = preset_experiments("table5-p-sweep");
    REQUIRE(psweep.size() >= 3);
    for (const auto& cell : psweep) CHECK(cell.penalty_kind == "lp");
    auto varying = preset_experiments("table6-varying-p");
    REQUIRE(varying.size() == 2);
    for (const auto& cell : varying) CHECK(cell.variant == Variant::Flexible);
}

TEST_CASE("preset summaries aggregate one row per cell") {
    fs::path dir = fresh_dir("summary");
    auto cells = preset_experiments("table2-noise-sweep");
    std::vector<ExperimentResult> results;
    for (const auto& cell : cells) results.push_back(run_experiment(cell));
    write_preset_summary("table2-noise-sweep", results, dir);

    auto t = io::read_table(dir / "table2-noise-sweep-summary.csv");
    auto err = io::column_as_doubles(t, "mhdm_rel_error");
    REQUIRE(err.size() == 3);
    for (std::size_t i = 0; i < results.size(); ++i)
        CHECK(err[i] == Catch::Approx(results[i].mhdm_rel_error()).margin(1e-12));
    fs::remove_all(dir);
}
