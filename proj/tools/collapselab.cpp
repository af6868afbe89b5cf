#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "clab/config_file.hpp"
#include "clab/corpus.hpp"
#include "clab/spectral.hpp"
#include "clab/svg_plot.hpp"
#include "clab/trajectory.hpp"

namespace fs = std::filesystem;
using namespace clab;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ExperimentConfig load_config_checked(const std::string& path) {
    try {
        return load_config(path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::string>& mncis,
                     const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& out) {
    if (mncis) {
        if (*mncis == "on") {
            cfg.mncis_enabled = true;
        } else if (*mncis == "off") {
            cfg.mncis_enabled = false;
        } else {
            throw UsageError("--mncis must be 'on' or 'off'");
        }
    }
    if (seed) cfg.seed = *seed;
    if (out) cfg.out_dir = *out;
}

void print_record(const GenerationRecord& r) {
    std::printf("gen %2d | rank %10.6f | ppl %12.6f | lm %8.5f | asnc %8.6f | distinct2 %8.6f\n",
                r.generation, r.effective_rank, r.perplexity, r.mean_lm_loss, r.mean_asnc_loss,
                r.distinct_2);
    std::fflush(stdout);
}

// Runs one experiment, flushing the CSV and sample file after every record so
// aborted runs keep their partial trajectory.
std::vector<GenerationRecord> run_persisted(const ExperimentConfig& cfg, const fs::path& dir,
                                            const std::string& csv_name) {
    fs::create_directories(dir);
    std::vector<GenerationRecord> records;
    auto on_record = [&](const GenerationRecord& r) {
        records.push_back(r);
        write_trajectory(records, (dir / csv_name).string());
        std::ofstream((dir / ("gen_" + std::to_string(r.generation) + "_sample.txt")).string())
            << r.sample_text << "\n";
        print_record(r);
    };
    run_experiment(cfg, on_record);
    return records;
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& mncis,
            const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out) {
    ExperimentConfig cfg = load_config_checked(config_path);
    apply_overrides(cfg, mncis, seed, out);
    std::printf("=== run: %s (mncis %s, seed %llu) ===\n", config_path.c_str(),
                cfg.mncis_enabled ? "on" : "off", static_cast<unsigned long long>(cfg.seed));
    run_persisted(cfg, cfg.out_dir, "trajectory.csv");
    std::printf("wrote %s/trajectory.csv\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_compare(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                const std::optional<std::string>& out) {
    ExperimentConfig cfg = load_config_checked(config_path);
    apply_overrides(cfg, std::nullopt, seed, out);
    const fs::path dir = cfg.out_dir;

    ExperimentConfig base_cfg = cfg;
    base_cfg.mncis_enabled = false;
    std::printf("=== compare: baseline (seed %llu) ===\n",
                static_cast<unsigned long long>(cfg.seed));
    auto baseline = run_persisted(base_cfg, dir / "baseline", "../baseline.csv");

    ExperimentConfig mncis_cfg = cfg;
    mncis_cfg.mncis_enabled = true;
    std::printf("=== compare: mncis (lambda %g, k %d) ===\n", mncis_cfg.asnc.lambda,
                mncis_cfg.asnc.k_layers);
    auto mncis = run_persisted(mncis_cfg, dir / "mncis", "../mncis.csv");

    render_plot(baseline, &mncis, (dir / "compare.svg").string());
    std::printf("wrote %s, %s, %s\n", (dir / "baseline.csv").c_str(), (dir / "mncis.csv").c_str(),
                (dir / "compare.svg").c_str());
    return 0;
}

int cmd_plot(const std::string& baseline_csv, const std::optional<std::string>& mncis_csv,
             const std::string& out_path) {
    auto baseline = read_trajectory(baseline_csv);
    std::optional<std::vector<GenerationRecord>> mncis;
    if (mncis_csv) mncis = read_trajectory(*mncis_csv);
    render_plot(baseline, mncis ? &*mncis : nullptr, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_analyze(const std::optional<std::string>& matrix_path,
                const std::optional<std::string>& tokens_path) {
    if (!matrix_path && !tokens_path) throw UsageError("analyze needs --matrix and/or --tokens");
    if (matrix_path) {
        HiddenBatch h = load_matrix(*matrix_path);
        SpectrumReport rep = spectrum(h);
        std::printf("matrix %s: %d x %d\n", matrix_path->c_str(), h.rows, h.cols);
        std::printf("effective_rank %.10g\n", rep.effective_rank);
        std::printf("top eigenvalues:");
        for (std::size_t i = 0; i < rep.eigenvalues.size() && i < 8; ++i) {
            std::printf(" %.6g", rep.eigenvalues[i]);
        }
        std::printf("\n");
    }
    if (tokens_path) {
        auto rows = read_token_csv(*tokens_path);
        std::printf("tokens %s: %zu sequences\n", tokens_path->c_str(), rows.size());
        std::printf("distinct_2 %.10g\n", distinct_n(rows, 2));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-collapse laboratory: recursive-training experiments with an "
                 "ASNC-regularized tiny causal language model"};
    app.require_subcommand(1);

    std::string config_path, baseline_csv, plot_out = "plot.svg";
    std::optional<std::string> mncis_flag, out_dir, mncis_csv, matrix_path, tokens_path;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "Run one experiment from a config file");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--mncis", mncis_flag, "override mncis_enabled (on|off)");
    run->add_option("--seed", seed, "override seed");
    run->add_option("--out", out_dir, "override output directory");

    auto* compare = app.add_subcommand("compare", "Run baseline and MNCIS with a shared seed");
    compare->add_option("--config", config_path, "experiment config file")->required();
    compare->add_option("--seed", seed, "override seed");
    compare->add_option("--out", out_dir, "override output directory");

    auto* plot = app.add_subcommand("plot", "Render trajectory CSVs to SVG");
    plot->add_option("--baseline", baseline_csv, "baseline trajectory CSV")->required();
    plot->add_option("--mncis", mncis_csv, "MNCIS trajectory CSV");
    plot->add_option("--out", plot_out, "output SVG path");

    auto* analyze = app.add_subcommand("analyze", "Spectral/diversity metrics on external files");
    analyze->add_option("--matrix", matrix_path, "matrix file ('N D' header)");
    analyze->add_option("--tokens", tokens_path, "token-id CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
    }

    try {
        if (run->parsed()) return cmd_run(config_path, mncis_flag, seed, out_dir);
        if (compare->parsed()) return cmd_compare(config_path, seed, out_dir);
        if (plot->parsed()) return cmd_plot(baseline_csv, mncis_csv, plot_out);
        return cmd_analyze(matrix_path, tokens_path);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
