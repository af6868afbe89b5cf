#pragma once

#include <string>
#include <vector>

#include "clab/tensor.hpp"

namespace clab {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// If the global L2 norm of all grads exceeds max_norm, scale every grad by
// max_norm / norm. Returns the pre-clip norm.
double clip_global_norm(std::vector<std::pair<std::string, Tensor>>& params, double max_norm);

// AdamW with bias correction and decoupled multiplicative weight decay.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }

    // Applies one update from the accumulated grads. Throws on non-finite
    // gradients, naming the offending parameter.
    void step(std::vector<std::pair<std::string, Tensor>>& params);

private:
    AdamWConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;  // lazily sized per parameter
};

}  // namespace clab
