#pragma once

#include <functional>
#include <vector>

#include "clab/tiny_lm.hpp"

namespace clab {

struct PplConfig {
    int stride = 512;
    int max_length = 128;
    int eval_token_cap = 50000;
    void validate() const;
};

struct PplResult {
    double ppl = 0.0;                 // exp(mean of per-window mean NLLs)
    double token_weighted_ppl = 0.0;  // exp(total NLL / total scored tokens)
    long n_windows = 0;
    long n_tokens = 0;  // scored (non-context) target tokens
};

// logits_fn(window_ids) -> row-major [len x vocab] next-token logits.
PplResult sliding_window_ppl(
    const std::function<std::vector<double>(const std::vector<int>&)>& logits_fn, int vocab_size,
    const std::vector<int>& stream, const PplConfig& cfg);

PplResult sliding_window_ppl(const TinyLM& model, const std::vector<int>& stream,
                             const PplConfig& cfg);

}  // namespace clab
