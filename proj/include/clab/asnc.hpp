#pragma once

#include <vector>

#include "clab/tensor.hpp"

namespace clab {

struct AsncConfig {
    double lambda = 0.5;  // coupling strength; soft constraint against shattering
    int k_layers = 3;     // how many trailing hidden layers to regularize
};

// Batch-orthogonality penalty for one layer: mean-pool over time, project rows
// to the unit hypersphere, and measure the element-mean squared deviation of
// the Gram matrix from identity. layer_hidden is [BxTxD], B >= 2.
Tensor gram_loss(Tape& tape, const Tensor& layer_hidden);

// lambda * (1/K) * sum of gram_loss over the last K hidden-state entries.
Tensor asnc_loss(Tape& tape, const std::vector<Tensor>& hidden_states, const AsncConfig& cfg);

}  // namespace clab
