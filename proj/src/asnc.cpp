#include "clab/asnc.hpp"

#include <stdexcept>
#include <string>

namespace clab {

Tensor gram_loss(Tape& tape, const Tensor& layer_hidden) {
    if (layer_hidden.ndim() != 3) {
        throw std::invalid_argument("gram_loss: expected [BxTxD] hidden states, got " +
                                    shape_str(layer_hidden.shape()));
    }
    if (layer_hidden.dim(0) < 2) {
        throw std::invalid_argument("gram_loss: batch must have at least 2 rows");
    }
    Tensor pooled = mean_pool_time(tape, layer_hidden);
    Tensor unit = l2_normalize_rows(tape, pooled, 1e-8);
    Tensor gram = matmul_nt(tape, unit, unit);
    return identity_mse(tape, gram);
}

Tensor asnc_loss(Tape& tape, const std::vector<Tensor>& hidden_states, const AsncConfig& cfg) {
    if (cfg.k_layers < 1) throw std::invalid_argument("asnc_loss: k_layers must be positive");
    if (cfg.lambda < 0.0) throw std::invalid_argument("asnc_loss: lambda must be nonnegative");
    if (static_cast<int>(hidden_states.size()) < cfg.k_layers) {
        throw std::invalid_argument("asnc_loss: k_layers=" + std::to_string(cfg.k_layers) +
                                    " exceeds " + std::to_string(hidden_states.size()) +
                                    " available layers");
    }
    const std::size_t first = hidden_states.size() - static_cast<std::size_t>(cfg.k_layers);
    Tensor total;
    for (std::size_t i = first; i < hidden_states.size(); ++i) {
        Tensor g = gram_loss(tape, hidden_states[i]);
        total = total.defined() ? add(tape, total, g) : g;
    }
    return scale(tape, total, cfg.lambda / cfg.k_layers);
}

}  // namespace clab
