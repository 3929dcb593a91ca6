// Command line driver: run configs or preset grids, re-verify stored
// decompositions, and test matrices for the positive-cone property.
//
// Exit codes: 0 success, 1 bad config or arguments, 2 solver failure,
// 3 failed verification.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include <mhdm/experiments.hpp>

namespace {

int run_config(const std::string& path, const std::string& out_dir,
               std::optional<std::uint64_t> seed) {
    mhdm::ExperimentConfig cfg = mhdm::parse_config_file(path);
    if (seed) cfg.seed = seed;
    mhdm::ExperimentResult r = mhdm::run_experiment(cfg);
    mhdm::write_experiment(r, out_dir);
    std::printf("%s: %d steps, relative error %.6g", cfg.name.c_str(),
                r.decomposition.steps(), r.mhdm_rel_error());
    if (auto te = r.tikhonov_rel_error()) std::printf(", tikhonov %.6g", *te);
    if (r.decomposition.stop_index)
        std::printf(", stopped at n=%d", *r.decomposition.stop_index);
    std::printf("\n");
    return 0;
}

int run_preset(const std::string& name, const std::string& out_dir,
               std::optional<std::uint64_t> seed) {
    auto cells = mhdm::preset_experiments(name);
    std::vector<mhdm::ExperimentResult> results;
    for (auto cfg : cells) {
        if (seed) cfg.seed = seed;
        std::printf("running %s ...\n", cfg.name.c_str());
        std::fflush(stdout);
        results.push_back(mhdm::run_experiment(cfg));
        mhdm::write_experiment(results.back(), out_dir);
    }
    mhdm::write_preset_summary(name, results, out_dir);
    for (const auto& r : results) {
        std::printf("%-28s rel error %.6g", r.config.name.c_str(), r.mhdm_rel_error());
        if (auto te = r.tikhonov_rel_error()) std::printf("  tikhonov %.6g", *te);
        if (r.decomposition.stop_index) std::printf("  n*=%d", *r.decomposition.stop_index);
        std::printf("\n");
    }
    return 0;
}

int run_check(const std::string& prefix) {
    auto failures = mhdm::check_decomposition(prefix);
    if (failures.empty()) {
        std::printf("%s: OK\n", prefix.c_str());
        return 0;
    }
    for (const auto& f : failures) std::printf("%s: %s\n", prefix.c_str(), f.c_str());
    return 3;
}

int run_cone(const std::string& matrix_path, const std::string& out_dir) {
    mhdm::Mat A = mhdm::io::read_matrix_csv(matrix_path);
    mhdm::ConeReport report = mhdm::positive_cone_check(A);
    std::fputs(mhdm::cone_report_text(report).c_str(), stdout);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        mhdm::io::write_file(std::filesystem::path(out_dir) / "cone-margins.csv",
                             mhdm::cone_report_csv(report));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiscale hierarchical decomposition experiments"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may trail the subcommand

    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    app.add_option("--out-dir", out_dir, "directory for result files");
    app.add_option("--seed", seed, "override the noise seed");

    std::string config_path;
    auto* cmd_run = app.add_subcommand("run", "run a config file");
    cmd_run->add_option("config", config_path, "key = value config file")->required();

    std::string preset_name;
    auto* cmd_preset = app.add_subcommand("preset", "run a named experiment grid");
    cmd_preset->add_option("name", preset_name, "preset name, omit to list them");

    std::string check_prefix;
    auto* cmd_check = app.add_subcommand("check", "re-verify a stored decomposition");
    cmd_check->add_option("prefix", check_prefix, "path prefix of the stored run")->required();

    std::string matrix_path;
    auto* cmd_cone = app.add_subcommand("cone", "test a matrix for the positive-cone property");
    cmd_cone->add_option("matrix", matrix_path, "matrix file, one row per line")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // usage errors are config errors (exit 1); --help stays exit 0
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (cmd_run->parsed()) return run_config(config_path, out_dir, seed);
        if (cmd_preset->parsed()) {
            if (preset_name.empty()) {
                for (const auto& n : mhdm::preset_names()) std::printf("%s\n", n.c_str());
                return 0;
            }
            return run_preset(preset_name, out_dir, seed);
        }
        if (cmd_check->parsed()) return run_check(check_prefix);
        if (cmd_cone->parsed())
            return run_cone(matrix_path, app.count("--out-dir") ? out_dir : std::string());
    } catch (const mhdm::numerical_failure& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
