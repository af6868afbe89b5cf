#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "clab/config_file.hpp"
#include "clab/rng.hpp"
#include "clab/svg_plot.hpp"
#include "clab/trajectory.hpp"

using namespace clab;

namespace {

std::vector<GenerationRecord> random_trajectory(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GenerationRecord> recs;
    for (int g = 0; g < n; ++g) {
        GenerationRecord r;
        r.generation = g;
        r.effective_rank = 1.0 + 30.0 * rng.uniform();
        r.perplexity = std::exp(1.0 + 6.0 * rng.uniform());
        r.mean_lm_loss = 6.0 * rng.uniform();
        r.mean_asnc_loss = rng.uniform();
        r.distinct_2 = rng.uniform();
        recs.push_back(r);
    }
    return recs;
}

}  // namespace

TEST_CASE("trajectory CSV round-trips exactly") {
    auto recs = random_trajectory(16, 5);
    const std::string path = "build/test_traj.csv";
    write_trajectory(recs, path);
    auto back = read_trajectory(path);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].generation == recs[i].generation);
        CHECK(back[i].effective_rank == recs[i].effective_rank);
        CHECK(back[i].perplexity == recs[i].perplexity);
        CHECK(back[i].mean_lm_loss == recs[i].mean_lm_loss);
        CHECK(back[i].mean_asnc_loss == recs[i].mean_asnc_loss);
        CHECK(back[i].distinct_2 == recs[i].distinct_2);
    }
    std::remove(path.c_str());
}

TEST_CASE("trajectory CSV edge cases") {
    const std::string path = "build/test_traj2.csv";
    write_trajectory({}, path);
    {
        std::ifstream f(path);
        std::string line;
        REQUIRE(std::getline(f, line));
        CHECK(line == kTrajectoryHeader);
        CHECK(!std::getline(f, line));
    }
    CHECK(read_trajectory(path).empty());

    auto recs = random_trajectory(2, 1);
    recs[1].perplexity = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(write_trajectory(recs, path));

    std::ofstream(path) << kTrajectoryHeader << "\n0,1.5,2.5,oops,0.1,0.2\n";
    CHECK_THROWS_WITH_AS(read_trajectory(path), doctest::Contains("line 2"), std::runtime_error);

    std::ofstream(path) << kTrajectoryHeader << "\n0,1,2,3,4,5\n2,1,2,3,4,5\n";
    CHECK_THROWS_WITH_AS(read_trajectory(path), doctest::Contains("out of sequence"),
                         std::runtime_error);

    std::ofstream(path) << "wrong,header\n";
    CHECK_THROWS(read_trajectory(path));
    std::remove(path.c_str());
    CHECK_THROWS(read_trajectory("build/no_such_file.csv"));
}

TEST_CASE("config parser") {
    SUBCASE("documented keys are all accepted and mapped") {
        ExperimentConfig cfg = parse_config_text(
            "# experiment\n"
            "seed = 7\n"
            "n_generations = 3\n"
            "mncis_enabled = on\n"
            "lambda = 0.25\n"
            "k_layers = 2\n"
            "learning_rate = 0.001\n"
            "epochs_per_gen = 1\n"
            "clip_norm = 0.5\n"
            "batch_size = 4\n"
            "weight_decay = 0.02\n"
            "vocab_size = 257\n"
            "d_model = 16\n"
            "n_layers = 2\n"
            "n_heads = 2\n"
            "seq_len = 32\n"
            "subset_cap = 64   # rows\n"
            "top_k = 10\n"
            "temperature = 0.9\n"
            "prompt_len = 5\n"
            "ppl_stride = 32\n"
            "eval_token_cap = 4096\n"
            "corpus_path = data/corpus.txt\n"
            "out_dir = out/test\n");
        CHECK(cfg.seed == 7);
        CHECK(cfg.n_generations == 3);
        CHECK(cfg.mncis_enabled);
        CHECK(cfg.asnc.lambda == 0.25);
        CHECK(cfg.asnc.k_layers == 2);
        CHECK(cfg.train.learning_rate == 0.001);
        CHECK(cfg.train.batch_size == 4);
        CHECK(cfg.model.d_model == 16);
        CHECK(cfg.model.max_positions == 32);  // follows seq_len
        CHECK(cfg.ppl.max_length == 32);
        CHECK(cfg.ppl.stride == 32);
        CHECK(cfg.sampling.top_k == 10);
        CHECK(cfg.sampling.temperature == 0.9);
        CHECK(cfg.corpus_path == "data/corpus.txt");
        CHECK(cfg.out_dir == "out/test");
    }
    SUBCASE("unknown keys are hard errors") {
        CHECK_THROWS_WITH_AS(parse_config_text("sed = 42\n"), doctest::Contains("unknown key"),
                             std::runtime_error);
    }
    SUBCASE("malformed lines carry line numbers") {
        CHECK_THROWS_WITH_AS(parse_config_text("seed = 42\nnot a pair\n"),
                             doctest::Contains("line 2"), std::runtime_error);
        CHECK_THROWS(parse_config_text("seed = abc\n"));
        CHECK_THROWS(parse_config_text("mncis_enabled = maybe\n"));
    }
    SUBCASE("inconsistent result fails validation") {
        CHECK_THROWS(parse_config_text("d_model = 16\nn_heads = 3\n"));
    }
    SUBCASE("missing file") { CHECK_THROWS(load_config("build/no_such.cfg")); }
}

TEST_CASE("svg plot") {
    auto base = random_trajectory(9, 11);
    auto mncis = random_trajectory(9, 12);

    SUBCASE("deterministic bytes and well-formedness basics") {
        std::string a = render_plot_svg(base, &mncis);
        std::string b = render_plot_svg(base, &mncis);
        CHECK(a == b);
        CHECK(a.find("<svg") != std::string::npos);
        CHECK(a.rfind("</svg>") != std::string::npos);
        CHECK(a.find("Global Spectral Topology") != std::string::npos);
        CHECK(a.find("Semantic Coherence (PPL)") != std::string::npos);
        CHECK(a.find("Baseline") != std::string::npos);
        CHECK(a.find("MNCIS") != std::string::npos);
        // naive tag balance: every '<' has a matching '>'
        int depth = 0;
        for (char c : a) {
            if (c == '<') ++depth;
            if (c == '>') --depth;
            CHECK(depth >= 0);
            CHECK(depth <= 1);
        }
        CHECK(depth == 0);
    }

    SUBCASE("monotone-decreasing rank renders monotone-increasing svg y") {
        auto mono = base;
        for (std::size_t i = 0; i < mono.size(); ++i) {
            mono[i].effective_rank = 20.0 - static_cast<double>(i);
        }
        std::string svg = render_plot_svg(mono, nullptr);
        std::size_t p = svg.find("points=\"");
        REQUIRE(p != std::string::npos);
        std::size_t e = svg.find('"', p + 8);
        std::istringstream pts(svg.substr(p + 8, e - p - 8));
        std::string pair;
        double prev_y = -1.0;
        int count = 0;
        while (pts >> pair) {
            double y = std::stod(pair.substr(pair.find(',') + 1));
            CHECK(y > prev_y);
            prev_y = y;
            ++count;
        }
        CHECK(count == static_cast<int>(mono.size()));
    }

    SUBCASE("log panel ticks land on powers of ten") {
        auto span = base;
        for (std::size_t i = 0; i < span.size(); ++i) {
            span[i].perplexity = 10.0 + static_cast<double>(i) * 120.0;  // 10 .. 970
        }
        std::string svg = render_plot_svg(span, nullptr);
        CHECK(svg.find(">10</text>") != std::string::npos);
        CHECK(svg.find(">100</text>") != std::string::npos);
        CHECK(svg.find(">1000</text>") != std::string::npos);
    }

    SUBCASE("single-point series is an error") {
        std::vector<GenerationRecord> one{base[0]};
        CHECK_THROWS(render_plot_svg(one, nullptr));
        CHECK_THROWS(render_plot_svg(base, &one));
    }
}
