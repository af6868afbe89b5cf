#include "clab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace clab {

double clip_global_norm(std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        for (double g : t.grad_vec()) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm) {
        double scale = max_norm / norm;
        for (auto& [name, t] : params) {
            if (!t.has_grad()) continue;
            double* g = t.grad();
            for (std::int64_t i = 0; i < t.numel(); ++i) g[i] *= scale;
        }
    }
    return norm;
}

void AdamW::step(std::vector<std::pair<std::string, Tensor>>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(static_cast<std::size_t>(params[i].second.numel()), 0.0);
            v_[i].assign(static_cast<std::size_t>(params[i].second.numel()), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw std::logic_error("AdamW: parameter list changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, p] = params[i];
        double* w = p.data();
        const double* g = p.grad();  // zeros if nothing flowed into it
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            if (!std::isfinite(g[j])) {
                throw std::runtime_error("AdamW: non-finite gradient in " + name +
                                         " at index " + std::to_string(j));
            }
            // decoupled weight decay, applied before the adam update
            w[j] *= 1.0 - cfg_.lr * cfg_.weight_decay;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace clab
