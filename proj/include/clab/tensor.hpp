#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace clab {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
};

// Dense double-precision tensor participating in a reverse-mode tape.
// Value semantics over a shared node: copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& vec() { return impl_->data; }
    const std::vector<double>& vec() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    // Grad buffer, allocated (zeroed) on first access.
    double* grad();
    const std::vector<double>& grad_vec() const { return impl_->grad; }
    void zero_grad();

    // Scalar accessor; throws unless numel() == 1.
    double item() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Execution tape. Ops append backward closures during the forward pass;
// backward() replays them once in reverse order.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void record(std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse.
    // Throws if loss is not scalar or the tape was already consumed.
    void backward(const Tensor& loss);

    std::size_t num_ops() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
    bool recording_ = true;
    bool consumed_ = false;
};

// ---- differentiable ops ------------------------------------------------

// Strict 2-D matrix product [MxK] @ [KxN] -> [MxN].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// a @ b^T with both operands given row-major: [MxK] @ ([NxK])^T -> [MxN].
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise; shapes must match exactly.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);

// x[...xD] + bias[D], broadcast over leading axes.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);

Tensor gelu(Tape& tape, const Tensor& x);

// Softmax along `axis` (negative axes count from the back), max-subtracted.
Tensor softmax(Tape& tape, const Tensor& x, int axis = -1);

// Per-row normalization over the last axis, then affine with gain/bias[D].
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Mean NLL of logits[...xV] against targets (leading axes folded).
// Positions whose target equals ignore_index contribute nothing.
constexpr int kIgnoreIndex = -100;
Tensor cross_entropy_mean(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                          int ignore_index = kIgnoreIndex);

// Rows scaled to unit L2 norm; rows with norm <= eps are divided by eps.
Tensor l2_normalize_rows(Tape& tape, const Tensor& x, double eps = 1e-8);

// Mean over axis 1 of [BxTxD] -> [BxD].
Tensor mean_pool_time(Tape& tape, const Tensor& x);

// Rows of `table` gathered by ids -> shape [ids.size() x D] reshaped to out_shape.
Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids,
                   Shape out_shape);

// mean((g - I)^2) over a square matrix.
Tensor identity_mse(Tape& tape, const Tensor& g);

Tensor sum(Tape& tape, const Tensor& x);

// Affine map over the last axis with leading axes folded:
// x[...xD] @ w[DxM] + b[M] -> [...xM]. Pass an undefined bias to skip it.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);
// x[...xD] @ (table[NxD])^T -> [...xN]; used for the tied output projection.
Tensor linear_nt(Tape& tape, const Tensor& x, const Tensor& table);

// Multi-head causal self-attention over packed projections.
// qkv is [BxTx3D] laid out [q | k | v] per position; returns [BxTxD].
// key_mask, when given, holds B*T flags; keys with flag 0 are never attended.
// A query position with no admissible key yields a zero output row.
Tensor causal_attention(Tape& tape, const Tensor& qkv, int n_heads,
                        const std::vector<int>* key_mask = nullptr);

// ---- numeric gradient check -------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must rebuild its graph from x on every call with the tape it is handed.
double grad_check(const std::function<Tensor(Tape&)>& f, Tensor x, double h = 1e-5);

}  // namespace clab
