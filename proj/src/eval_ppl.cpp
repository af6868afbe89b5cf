#include "clab/eval_ppl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace clab {

void PplConfig::validate() const {
    if (stride <= 0) throw std::invalid_argument("PplConfig: stride must be positive");
    if (max_length <= 0) throw std::invalid_argument("PplConfig: max_length must be positive");
    if (stride > max_length * 4) {
        throw std::invalid_argument("PplConfig: stride exceeds 4x max_length");
    }
    if (eval_token_cap < max_length) {
        throw std::invalid_argument("PplConfig: eval_token_cap below max_length");
    }
}

PplResult sliding_window_ppl(
    const std::function<std::vector<double>(const std::vector<int>&)>& logits_fn, int vocab_size,
    const std::vector<int>& stream, const PplConfig& cfg) {
    cfg.validate();
    if (stream.size() < 2) throw std::invalid_argument("sliding_window_ppl: need at least 2 tokens");
    for (int id : stream) {
        if (id < 0 || id >= vocab_size) {
            throw std::invalid_argument("sliding_window_ppl: token id out of range: " +
                                        std::to_string(id));
        }
    }
    const long n = std::min<long>(static_cast<long>(stream.size()), cfg.eval_token_cap);

    PplResult res;
    double window_nll_sum = 0.0;
    double token_nll_sum = 0.0;
    for (long i = 0; i < n; i += cfg.stride) {
        const long begin = std::max(i + cfg.stride - cfg.max_length, 0L);
        const long end = std::min(i + cfg.stride, n);
        if (begin >= end) continue;  // stride > max_length can strand a trailing sliver
        const long len = end - begin;
        const long trg_len = end - i;
        // targets with index < context are masked out; shifting then scores
        // positions t where the target index t+1 clears the context boundary
        const long context = std::max(len - trg_len, 0L);

        std::vector<int> window(stream.begin() + begin, stream.begin() + end);
        std::vector<double> logits = logits_fn(window);
        if (logits.size() != static_cast<std::size_t>(len) * static_cast<std::size_t>(vocab_size)) {
            throw std::runtime_error("sliding_window_ppl: logits_fn returned wrong size");
        }

        double nll = 0.0;
        long scored = 0;
        for (long t = 0; t + 1 < len; ++t) {
            if (t + 1 < context) continue;
            const double* row = logits.data() + t * vocab_size;
            double mx = row[0];
            for (int v = 1; v < vocab_size; ++v) mx = std::max(mx, row[v]);
            double z = 0.0;
            for (int v = 0; v < vocab_size; ++v) z += std::exp(row[v] - mx);
            nll += -(row[window[static_cast<std::size_t>(t + 1)]] - mx - std::log(z));
            ++scored;
        }
        if (scored == 0) continue;  // length-1 window has nothing to score
        window_nll_sum += nll / static_cast<double>(scored);
        token_nll_sum += nll;
        res.n_tokens += scored;
        ++res.n_windows;
    }
    if (res.n_windows == 0) throw std::runtime_error("sliding_window_ppl: no scorable windows");
    res.ppl = std::exp(window_nll_sum / static_cast<double>(res.n_windows));
    res.token_weighted_ppl = std::exp(token_nll_sum / static_cast<double>(res.n_tokens));
    return res;
}

PplResult sliding_window_ppl(const TinyLM& model, const std::vector<int>& stream,
                             const PplConfig& cfg) {
    auto fn = [&model](const std::vector<int>& window) {
        Tape tape(false);
        ForwardOutput out = model.forward(tape, window, 1, static_cast<int>(window.size()));
        return out.logits.vec();
    };
    return sliding_window_ppl(fn, model.config().vocab_size, stream, cfg);
}

}  // namespace clab
