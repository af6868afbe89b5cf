#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clab/rng.hpp"
#include "clab/tensor.hpp"

namespace clab {

struct ModelConfig {
    int vocab_size = 257;   // byte-level + pad/eos
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int max_positions = 128;
    int ffn_mult = 4;

    void validate() const;
};

struct ForwardOutput {
    Tensor logits;                      // [BxTxV]
    std::vector<Tensor> hidden_states;  // n_layers + 1 entries of [BxTxD]
};

struct SamplingParams {
    int top_k = 50;
    double temperature = 1.0;
};

// Decoder-only causal transformer: learned positions, pre-norm residual
// blocks, output projection tied to the token embedding.
class TinyLM {
public:
    static TinyLM init(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    // Named mutable parameter list in a stable, documented order.
    std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
    std::int64_t num_parameters() const;
    void zero_grad();

    // ids and mask are row-major [BxT]; mask may be empty (all positions valid).
    ForwardOutput forward(Tape& tape, const std::vector<int>& ids, int B, int T,
                          const std::vector<int>& mask = {}) const;

    // Shifted next-token cross entropy over logits[:, :-1] vs ids[:, 1:].
    Tensor lm_loss(Tape& tape, const std::vector<int>& ids, int B, int T,
                   const std::vector<int>& mask = {}) const;
    // Same, but also exposes the forward output for regularizers/metrics.
    Tensor lm_loss(Tape& tape, const std::vector<int>& ids, int B, int T,
                   const std::vector<int>& mask, ForwardOutput& out) const;

    // Top-k sampling from `prompts` ([BxP]) out to max_length tokens per row.
    // Rows that sample the pad/eos token stop and are padded with it.
    std::vector<std::vector<int>> generate(const std::vector<std::vector<int>>& prompts,
                                           int max_length, const SamplingParams& sampling,
                                           std::uint64_t seed) const;

    // Single sampling step, exposed so the distribution can be tested directly.
    static int sample_top_k(const double* logits, int vocab, int top_k, double temperature,
                            Rng& rng);

    void save_checkpoint(const std::string& path) const;
    static TinyLM load_checkpoint(const std::string& path);

private:
    TinyLM() = default;
    Tensor param(const std::string& name) const;

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace clab
