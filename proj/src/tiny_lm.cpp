#include "clab/tiny_lm.hpp"

#include "clab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace clab {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("config: vocab_size must be at least 2");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_positions < 1 || ffn_mult < 1) {
        throw std::invalid_argument("config: all dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("config: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
}

static Tensor gaussian_param(Shape shape, Rng& rng, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0, stddev);
    return t;
}

TinyLM TinyLM::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TinyLM m;
    m.cfg_ = cfg;
    Rng rng(seed);
    const int D = cfg.d_model, F = cfg.d_model * cfg.ffn_mult;
    const double std0 = 0.02;

    auto add_param = [&m](const std::string& name, Tensor t) {
        m.params_.emplace_back(name, std::move(t));
    };
    add_param("tok_emb", gaussian_param({cfg.vocab_size, D}, rng, std0));
    add_param("pos_emb", gaussian_param({cfg.max_positions, D}, rng, std0));
    for (int l = 0; l < cfg.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        add_param(p + "ln1.gain", Tensor::full({D}, 1.0, true));
        add_param(p + "ln1.bias", Tensor::zeros({D}, true));
        add_param(p + "attn.w_qkv", gaussian_param({D, 3 * D}, rng, std0));
        add_param(p + "attn.b_qkv", Tensor::zeros({3 * D}, true));
        add_param(p + "attn.w_o", gaussian_param({D, D}, rng, std0));
        add_param(p + "attn.b_o", Tensor::zeros({D}, true));
        add_param(p + "ln2.gain", Tensor::full({D}, 1.0, true));
        add_param(p + "ln2.bias", Tensor::zeros({D}, true));
        add_param(p + "ffn.w1", gaussian_param({D, F}, rng, std0));
        add_param(p + "ffn.b1", Tensor::zeros({F}, true));
        add_param(p + "ffn.w2", gaussian_param({F, D}, rng, std0));
        add_param(p + "ffn.b2", Tensor::zeros({D}, true));
    }
    add_param("lnf.gain", Tensor::full({D}, 1.0, true));
    add_param("lnf.bias", Tensor::zeros({D}, true));
    return m;
}

Tensor TinyLM::param(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw std::logic_error("unknown parameter " + name);
}

std::int64_t TinyLM::num_parameters() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

void TinyLM::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

ForwardOutput TinyLM::forward(Tape& tape, const std::vector<int>& ids, int B, int T,
                              const std::vector<int>& mask) const {
    if (B < 1 || T < 1) throw std::invalid_argument("forward: B and T must be positive");
    if (T > cfg_.max_positions) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(T) +
                                    " exceeds max_positions " + std::to_string(cfg_.max_positions));
    }
    if (static_cast<int>(ids.size()) != B * T) {
        throw std::invalid_argument("forward: ids length does not match BxT");
    }
    if (!mask.empty() && static_cast<int>(mask.size()) != B * T) {
        throw std::invalid_argument("forward: mask length does not match BxT");
    }
    const int D = cfg_.d_model;

    Tensor tok = gather_rows(tape, param("tok_emb"), ids, {B, T, D});
    std::vector<int> pos_ids(static_cast<std::size_t>(B) * T);
    for (int b = 0; b < B; ++b) {
        for (int t = 0; t < T; ++t) pos_ids[static_cast<std::size_t>(b) * T + t] = t;
    }
    Tensor pos = gather_rows(tape, param("pos_emb"), pos_ids, {B, T, D});
    Tensor x = add(tape, tok, pos);

    ForwardOutput out;
    out.hidden_states.reserve(static_cast<std::size_t>(cfg_.n_layers) + 1);
    out.hidden_states.push_back(x);

    const std::vector<int>* key_mask = mask.empty() ? nullptr : &mask;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        Tensor h1 = layer_norm(tape, x, param(p + "ln1.gain"), param(p + "ln1.bias"));
        Tensor qkv = linear(tape, h1, param(p + "attn.w_qkv"), param(p + "attn.b_qkv"));
        Tensor attn = causal_attention(tape, qkv, cfg_.n_heads, key_mask);
        Tensor proj = linear(tape, attn, param(p + "attn.w_o"), param(p + "attn.b_o"));
        x = add(tape, x, proj);
        Tensor h2 = layer_norm(tape, x, param(p + "ln2.gain"), param(p + "ln2.bias"));
        Tensor ff1 = gelu(tape, linear(tape, h2, param(p + "ffn.w1"), param(p + "ffn.b1")));
        Tensor ff2 = linear(tape, ff1, param(p + "ffn.w2"), param(p + "ffn.b2"));
        x = add(tape, x, ff2);
        if (l + 1 < cfg_.n_layers) out.hidden_states.push_back(x);
    }
    // final entry is post-final-layer-norm, mirroring the reference model family
    Tensor xf = layer_norm(tape, x, param("lnf.gain"), param("lnf.bias"));
    out.hidden_states.push_back(xf);
    out.logits = linear_nt(tape, xf, param("tok_emb"));
    return out;
}

Tensor TinyLM::lm_loss(Tape& tape, const std::vector<int>& ids, int B, int T,
                       const std::vector<int>& mask) const {
    ForwardOutput out;
    return lm_loss(tape, ids, B, T, mask, out);
}

Tensor TinyLM::lm_loss(Tape& tape, const std::vector<int>& ids, int B, int T,
                       const std::vector<int>& mask, ForwardOutput& out) const {
    if (T < 2) throw std::invalid_argument("lm_loss: needs at least 2 tokens per row");
    out = forward(tape, ids, B, T, mask);
    std::vector<int> targets(static_cast<std::size_t>(B) * T, kIgnoreIndex);
    for (int b = 0; b < B; ++b) {
        for (int t = 0; t + 1 < T; ++t) {
            targets[static_cast<std::size_t>(b) * T + t] = ids[static_cast<std::size_t>(b) * T + t + 1];
        }
    }
    return cross_entropy_mean(tape, out.logits, targets);
}

int TinyLM::sample_top_k(const double* logits, int vocab, int top_k, double temperature, Rng& rng) {
    if (top_k < 1) throw std::invalid_argument("sample_top_k: top_k must be at least 1");
    if (temperature <= 0.0) throw std::invalid_argument("sample_top_k: temperature must be positive");
    int k = std::min(top_k, vocab);

    std::vector<int> idx(static_cast<std::size_t>(vocab));
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](int a, int b) {
        if (logits[a] != logits[b]) return logits[a] > logits[b];
        return a < b;  // deterministic tie-break
    };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);

    double mx = logits[idx[0]] / temperature;
    std::vector<double> w(static_cast<std::size_t>(k));
    double z = 0.0;
    for (int i = 0; i < k; ++i) {
        w[static_cast<std::size_t>(i)] = std::exp(logits[idx[static_cast<std::size_t>(i)]] / temperature - mx);
        z += w[static_cast<std::size_t>(i)];
    }
    double u = rng.uniform() * z;
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        acc += w[static_cast<std::size_t>(i)];
        if (u < acc) return idx[static_cast<std::size_t>(i)];
    }
    return idx[static_cast<std::size_t>(k - 1)];
}

std::vector<std::vector<int>> TinyLM::generate(const std::vector<std::vector<int>>& prompts,
                                               int max_length, const SamplingParams& sampling,
                                               std::uint64_t seed) const {
    if (prompts.empty()) throw std::invalid_argument("generate: no prompts");
    const int B = static_cast<int>(prompts.size());
    const int P = static_cast<int>(prompts[0].size());
    if (P < 1) throw std::invalid_argument("generate: prompts must have at least 1 token");
    if (P >= max_length) {
        throw std::invalid_argument("generate: prompt length " + std::to_string(P) +
                                    " must be shorter than max_length " + std::to_string(max_length));
    }
    if (max_length > cfg_.max_positions) {
        throw std::invalid_argument("generate: max_length exceeds max_positions");
    }
    if (sampling.top_k < 1) throw std::invalid_argument("generate: top_k must be at least 1");
    if (sampling.temperature <= 0.0) throw std::invalid_argument("generate: temperature must be positive");
    for (const auto& p : prompts) {
        if (static_cast<int>(p.size()) != P) throw std::invalid_argument("generate: ragged prompts");
        for (int id : p) {
            if (id < 0 || id >= cfg_.vocab_size) throw std::invalid_argument("generate: prompt id out of vocabulary");
        }
    }

    const int D = cfg_.d_model;
    const Tensor tok_emb = param("tok_emb");
    Rng rng(seed);
    std::vector<std::vector<int>> rows = prompts;
    std::vector<bool> done(static_cast<std::size_t>(B), false);

    for (int t = P; t < max_length; ++t) {
        // pack the batch at its current uniform length
        std::vector<int> ids(static_cast<std::size_t>(B) * t);
        for (int b = 0; b < B; ++b) {
            std::copy(rows[static_cast<std::size_t>(b)].begin(), rows[static_cast<std::size_t>(b)].end(),
                      ids.begin() + static_cast<std::size_t>(b) * t);
        }
        Tape tape(false);
        ForwardOutput out = forward(tape, ids, B, t);
        const Tensor& last = out.hidden_states.back();
        std::vector<double> logits(static_cast<std::size_t>(cfg_.vocab_size));
        for (int b = 0; b < B; ++b) {
            if (done[static_cast<std::size_t>(b)]) {
                rows[static_cast<std::size_t>(b)].push_back(kPadToken);
                continue;
            }
            const double* h = last.data() + (static_cast<std::size_t>(b) * t + (t - 1)) * D;
            for (int v = 0; v < cfg_.vocab_size; ++v) {
                const double* e = tok_emb.data() + static_cast<std::size_t>(v) * D;
                double acc = 0.0;
                for (int d = 0; d < D; ++d) acc += h[d] * e[d];
                logits[static_cast<std::size_t>(v)] = acc;
            }
            int next = sample_top_k(logits.data(), cfg_.vocab_size, sampling.top_k,
                                    sampling.temperature, rng);
            rows[static_cast<std::size_t>(b)].push_back(next);
            if (next == kPadToken) done[static_cast<std::size_t>(b)] = true;
        }
    }
    return rows;
}

// ---- checkpoint --------------------------------------------------------

static constexpr char kCheckpointMagic[8] = {'C', 'L', 'A', 'B', 'T', 'L', 'M', '1'};

template <typename T>
static void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
static void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated checkpoint");
}

void TinyLM::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::int32_t cfg[6] = {cfg_.vocab_size, cfg_.d_model, cfg_.n_layers,
                                 cfg_.n_heads, cfg_.max_positions, cfg_.ffn_mult};
    out.write(reinterpret_cast<const char*>(cfg), sizeof(cfg));
    write_pod(out, static_cast<std::int32_t>(params_.size()));
    for (const auto& [name, t] : params_) {
        write_pod(out, static_cast<std::int32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::int32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) write_pod(out, static_cast<std::int32_t>(t.dim(i)));
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.numel())));
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

TinyLM TinyLM::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error(path + " is not a model checkpoint");
    }
    std::int32_t cfg[6];
    in.read(reinterpret_cast<char*>(cfg), sizeof(cfg));
    if (!in) throw std::runtime_error("truncated checkpoint");
    ModelConfig mc{cfg[0], cfg[1], cfg[2], cfg[3], cfg[4], cfg[5]};
    TinyLM m = TinyLM::init(mc, 0);
    std::int32_t count;
    read_pod(in, count);
    if (count != static_cast<std::int32_t>(m.params_.size())) {
        throw std::runtime_error("checkpoint parameter count mismatch");
    }
    for (auto& [name, t] : m.params_) {
        std::int32_t name_len;
        read_pod(in, name_len);
        std::string got(static_cast<std::size_t>(name_len), '\0');
        in.read(got.data(), name_len);
        if (!in || got != name) throw std::runtime_error("checkpoint parameter order mismatch at " + name);
        std::int32_t nd;
        read_pod(in, nd);
        if (nd != t.ndim()) throw std::runtime_error("checkpoint shape mismatch at " + name);
        for (int i = 0; i < nd; ++i) {
            std::int32_t d;
            read_pod(in, d);
            if (d != t.dim(i)) throw std::runtime_error("checkpoint shape mismatch at " + name);
        }
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.numel())));
        if (!in) throw std::runtime_error("truncated checkpoint");
    }
    return m;
}

}  // namespace clab
