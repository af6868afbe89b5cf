#include "clab/config_file.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(line_no) + ": " + msg);
}

long long parse_int(const std::string& v, int line_no) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return x;
    } catch (const std::exception&) {
        fail(line_no, "expected integer, got '" + v + "'");
    }
}

double parse_real(const std::string& v, int line_no) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return x;
    } catch (const std::exception&) {
        fail(line_no, "expected real, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line_no) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    fail(line_no, "expected boolean (true/false/on/off/1/0), got '" + v + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) fail(line_no, "empty key or value");

        if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(val, line_no));
        } else if (key == "n_generations") {
            cfg.n_generations = static_cast<int>(parse_int(val, line_no));
        } else if (key == "mncis_enabled") {
            cfg.mncis_enabled = parse_bool(val, line_no);
        } else if (key == "lambda") {
            cfg.asnc.lambda = parse_real(val, line_no);
        } else if (key == "k_layers") {
            cfg.asnc.k_layers = static_cast<int>(parse_int(val, line_no));
        } else if (key == "learning_rate") {
            cfg.train.learning_rate = parse_real(val, line_no);
        } else if (key == "epochs_per_gen") {
            cfg.train.epochs_per_gen = static_cast<int>(parse_int(val, line_no));
        } else if (key == "clip_norm") {
            cfg.train.clip_norm = parse_real(val, line_no);
        } else if (key == "batch_size") {
            cfg.train.batch_size = static_cast<int>(parse_int(val, line_no));
        } else if (key == "weight_decay") {
            cfg.train.weight_decay = parse_real(val, line_no);
        } else if (key == "vocab_size") {
            cfg.model.vocab_size = static_cast<int>(parse_int(val, line_no));
        } else if (key == "d_model") {
            cfg.model.d_model = static_cast<int>(parse_int(val, line_no));
        } else if (key == "n_layers") {
            cfg.model.n_layers = static_cast<int>(parse_int(val, line_no));
        } else if (key == "n_heads") {
            cfg.model.n_heads = static_cast<int>(parse_int(val, line_no));
        } else if (key == "seq_len") {
            cfg.seq_len = static_cast<int>(parse_int(val, line_no));
        } else if (key == "subset_cap") {
            cfg.subset_cap = static_cast<int>(parse_int(val, line_no));
        } else if (key == "top_k") {
            cfg.sampling.top_k = static_cast<int>(parse_int(val, line_no));
        } else if (key == "temperature") {
            cfg.sampling.temperature = parse_real(val, line_no);
        } else if (key == "prompt_len") {
            cfg.prompt_len = static_cast<int>(parse_int(val, line_no));
        } else if (key == "ppl_stride") {
            cfg.ppl.stride = static_cast<int>(parse_int(val, line_no));
        } else if (key == "eval_token_cap") {
            cfg.ppl.eval_token_cap = static_cast<int>(parse_int(val, line_no));
        } else if (key == "corpus_path") {
            cfg.corpus_path = val;
        } else if (key == "out_dir") {
            cfg.out_dir = val;
        } else {
            fail(line_no, "unknown key '" + key + "'");
        }
    }
    // one context length everywhere: training rows, sampling, PPL windows
    cfg.model.max_positions = cfg.seq_len;
    cfg.ppl.max_length = cfg.seq_len;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace clab
