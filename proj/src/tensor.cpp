#include "clab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace clab {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

static void check_shape(const Shape& s) {
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got shape " + shape_str(s));
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

double* Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (impl_->data.size() != 1) {
        throw std::logic_error("item() called on non-scalar tensor of shape " + shape_str(impl_->shape));
    }
    return impl_->data[0];
}

void Tape::record(std::function<void()> backward_fn) {
    if (recording_) ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (!recording_) throw std::logic_error("backward() on a non-recording tape");
    if (consumed_) throw std::logic_error("backward() called twice on the same tape");
    if (loss.numel() != 1) {
        throw std::logic_error("backward() root must be scalar, got shape " + shape_str(loss.shape()));
    }
    consumed_ = true;
    Tensor root = loss;
    root.grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

// ---- helpers -----------------------------------------------------------

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool wants_grad(const Tensor& t) { return t.requires_grad(); }

Tensor make_out(Shape shape, bool requires_grad) {
    Tensor t = Tensor::zeros(std::move(shape), false);
    t.set_requires_grad(requires_grad);
    return t;
}

// Output grad, or nullptr when no gradient ever reached this node.
const double* out_grad(const ImplPtr& out) {
    return out->grad.empty() ? nullptr : out->grad.data();
}

double* acc_grad(const ImplPtr& t) {
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
    return t->grad.data();
}

void require_ndim(const Tensor& t, int nd, const char* op) {
    if (t.ndim() != nd) {
        throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(nd) +
                                    "-d tensor, got shape " + shape_str(t.shape()));
    }
}

}  // namespace

// ---- matmul ------------------------------------------------------------

// c[MxN] += a[MxK] @ b[KxN]
static void mm_acc(const double* a, const double* b, double* c, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const double* arow = a + static_cast<std::size_t>(m) * K;
        double* crow = c + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            double amk = arow[k];
            if (amk == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) crow[n] += amk * brow[n];
        }
    }
}

// c[MxN] += a[MxK] @ b[NxK]^T
static void mm_nt_acc(const double* a, const double* b, double* c, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const double* arow = a + static_cast<std::size_t>(m) * K;
        double* crow = c + static_cast<std::size_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const double* brow = b + static_cast<std::size_t>(n) * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
            crow[n] += acc;
        }
    }
}

// c[KxN] += a[MxK]^T @ b[MxN]
static void mm_tn_acc(const double* a, const double* b, double* c, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const double* arow = a + static_cast<std::size_t>(m) * K;
        const double* brow = b + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            double amk = arow[k];
            if (amk == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) crow[n] += amk * brow[n];
        }
    }
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_ndim(a, 2, "matmul");
    require_ndim(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    int M = a.dim(0), K = a.dim(1), N = b.dim(1);
    Tensor out = make_out({M, N}, wants_grad(a) || wants_grad(b));
    mm_acc(a.data(), b.data(), out.data(), M, K, N);
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ia = a.impl(), ib = b.impl(), io = out.impl();
        tape.record([ia, ib, io, M, K, N] {
            const double* go = out_grad(io);
            if (!go) return;
            // dA = dOut @ B^T ; dB = A^T @ dOut
            if (ia->requires_grad) mm_nt_acc(go, ib->data.data(), acc_grad(ia), M, N, K);
            if (ib->requires_grad) mm_tn_acc(ia->data.data(), go, acc_grad(ib), M, K, N);
        });
    }
    return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
    require_ndim(a, 2, "matmul_nt");
    require_ndim(b, 2, "matmul_nt");
    if (a.dim(1) != b.dim(1)) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    int M = a.dim(0), K = a.dim(1), N = b.dim(0);
    Tensor out = make_out({M, N}, wants_grad(a) || wants_grad(b));
    mm_nt_acc(a.data(), b.data(), out.data(), M, K, N);
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ia = a.impl(), ib = b.impl(), io = out.impl();
        tape.record([ia, ib, io, M, K, N] {
            const double* go = out_grad(io);
            if (!go) return;
            // out = A @ B^T: dA = dOut @ B ; dB = dOut^T @ A
            if (ia->requires_grad) mm_acc(go, ib->data.data(), acc_grad(ia), M, N, K);
            if (ib->requires_grad) mm_tn_acc(go, ia->data.data(), acc_grad(ib), M, N, K);
        });
    }
    return out;
}

// ---- elementwise -------------------------------------------------------

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = make_out(a.shape(), wants_grad(a) || wants_grad(b));
    const std::size_t n = static_cast<std::size_t>(a.numel());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ia = a.impl(), ib = b.impl(), io = out.impl();
        tape.record([ia, ib, io, n] {
            const double* go = out_grad(io);
            if (!go) return;
            if (ia->requires_grad) {
                double* ga = acc_grad(ia);
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (ib->requires_grad) {
                double* gb = acc_grad(ib);
                for (std::size_t i = 0; i < n; ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = make_out(a.shape(), wants_grad(a) || wants_grad(b));
    const std::size_t n = static_cast<std::size_t>(a.numel());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ia = a.impl(), ib = b.impl(), io = out.impl();
        tape.record([ia, ib, io, n] {
            const double* go = out_grad(io);
            if (!go) return;
            if (ia->requires_grad) {
                double* ga = acc_grad(ia);
                for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * ib->data[i];
            }
            if (ib->requires_grad) {
                double* gb = acc_grad(ib);
                for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * ia->data[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
    Tensor out = make_out(x.shape(), wants_grad(x));
    const std::size_t n = static_cast<std::size_t>(x.numel());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) po[i] = c * px[i];
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), io = out.impl();
        tape.record([ix, io, c, n] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gx = acc_grad(ix);
            for (std::size_t i = 0; i < n; ++i) gx[i] += c * go[i];
        });
    }
    return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
    require_ndim(bias, 1, "add_bias");
    int D = bias.dim(0);
    if (x.shape().back() != D) {
        throw std::invalid_argument("add_bias: last axis " + shape_str(x.shape()) +
                                    " does not match bias " + shape_str(bias.shape()));
    }
    Tensor out = make_out(x.shape(), wants_grad(x) || wants_grad(bias));
    const std::size_t rows = static_cast<std::size_t>(x.numel() / D);
    const double* px = x.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = px + r * D;
        double* oi = po + r * D;
        for (int d = 0; d < D; ++d) oi[d] = xi[d] + pb[d];
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), ib = bias.impl(), io = out.impl();
        tape.record([ix, ib, io, rows, D] {
            const double* go = out_grad(io);
            if (!go) return;
            if (ix->requires_grad) {
                double* gx = acc_grad(ix);
                const std::size_t n = rows * static_cast<std::size_t>(D);
                for (std::size_t i = 0; i < n; ++i) gx[i] += go[i];
            }
            if (ib->requires_grad) {
                double* gb = acc_grad(ib);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gi = go + r * D;
                    for (int d = 0; d < D; ++d) gb[d] += gi[d];
                }
            }
        });
    }
    return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
    Tensor out = make_out(x.shape(), wants_grad(x));
    const std::size_t n = static_cast<std::size_t>(x.numel());
    const double* px = x.data();
    double* po = out.data();
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < n; ++i) {
        po[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * inv_sqrt2));
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), io = out.impl();
        tape.record([ix, io, n] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gx = acc_grad(ix);
            for (std::size_t i = 0; i < n; ++i) {
                double v = ix->data[i];
                double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                gx[i] += go[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

// ---- softmax -----------------------------------------------------------

Tensor softmax(Tape& tape, const Tensor& x, int axis) {
    int nd = x.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) {
        throw std::invalid_argument("softmax: axis out of range for shape " + shape_str(x.shape()));
    }
    const int L = x.dim(axis);
    std::size_t inner = 1, outer = 1;
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<std::size_t>(x.dim(i));
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));

    Tensor out = make_out(x.shape(), wants_grad(x));
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * L * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (int l = 0; l < L; ++l) mx = std::max(mx, px[base + static_cast<std::size_t>(l) * inner]);
            double z = 0.0;
            for (int l = 0; l < L; ++l) {
                double e = std::exp(px[base + static_cast<std::size_t>(l) * inner] - mx);
                po[base + static_cast<std::size_t>(l) * inner] = e;
                z += e;
            }
            double invz = 1.0 / z;
            for (int l = 0; l < L; ++l) po[base + static_cast<std::size_t>(l) * inner] *= invz;
        }
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), io = out.impl();
        tape.record([ix, io, outer, inner, L] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gx = acc_grad(ix);
            const double* y = io->data.data();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * L * inner + in;
                    double dot = 0.0;
                    for (int l = 0; l < L; ++l) {
                        std::size_t idx = base + static_cast<std::size_t>(l) * inner;
                        dot += go[idx] * y[idx];
                    }
                    for (int l = 0; l < L; ++l) {
                        std::size_t idx = base + static_cast<std::size_t>(l) * inner;
                        gx[idx] += y[idx] * (go[idx] - dot);
                    }
                }
            }
        });
    }
    return out;
}

// ---- layer norm --------------------------------------------------------

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    require_ndim(gain, 1, "layer_norm");
    require_ndim(bias, 1, "layer_norm");
    const int D = x.shape().back();
    if (gain.dim(0) != D || bias.dim(0) != D) {
        throw std::invalid_argument("layer_norm: gain/bias do not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t rows = static_cast<std::size_t>(x.numel() / D);
    Tensor out = make_out(x.shape(), wants_grad(x) || wants_grad(gain) || wants_grad(bias));
    // normalized values saved for backward
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.numel()));
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const double* px = x.data();
    const double* pg = gain.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = px + r * D;
        double mean = 0.0;
        for (int d = 0; d < D; ++d) mean += xi[d];
        mean /= D;
        double var = 0.0;
        for (int d = 0; d < D; ++d) {
            double c = xi[d] - mean;
            var += c * c;
        }
        var /= D;
        double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        double* xh = xhat->data() + r * D;
        double* oi = po + r * D;
        for (int d = 0; d < D; ++d) {
            xh[d] = (xi[d] - mean) * istd;
            oi[d] = pg[d] * xh[d] + pb[d];
        }
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), ig = gain.impl(), ib = bias.impl(), io = out.impl();
        tape.record([ix, ig, ib, io, xhat, inv_std, rows, D] {
            const double* go = out_grad(io);
            if (!go) return;
            const double* pg = ig->data.data();
            if (ix->requires_grad) {
                double* gx = acc_grad(ix);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gi = go + r * D;
                    const double* xh = xhat->data() + r * D;
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (int d = 0; d < D; ++d) {
                        double dxh = gi[d] * pg[d];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[d];
                    }
                    double istd = (*inv_std)[r];
                    for (int d = 0; d < D; ++d) {
                        double dxh = gi[d] * pg[d];
                        gx[r * D + d] += istd * (dxh - sum_dxh / D - xh[d] * sum_dxh_xh / D);
                    }
                }
            }
            if (ig->requires_grad) {
                double* gg = acc_grad(ig);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gi = go + r * D;
                    const double* xh = xhat->data() + r * D;
                    for (int d = 0; d < D; ++d) gg[d] += gi[d] * xh[d];
                }
            }
            if (ib->requires_grad) {
                double* gb = acc_grad(ib);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gi = go + r * D;
                    for (int d = 0; d < D; ++d) gb[d] += gi[d];
                }
            }
        });
    }
    return out;
}

// ---- cross entropy -----------------------------------------------------

Tensor cross_entropy_mean(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                          int ignore_index) {
    const int V = logits.shape().back();
    const std::size_t N = static_cast<std::size_t>(logits.numel() / V);
    if (targets.size() != N) {
        throw std::invalid_argument("cross_entropy_mean: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(N) + " rows of " +
                                    shape_str(logits.shape()));
    }
    std::size_t count = 0;
    for (int t : targets) {
        if (t == ignore_index) continue;
        if (t < 0 || t >= V) {
            throw std::invalid_argument("cross_entropy_mean: target " + std::to_string(t) +
                                        " outside vocabulary of size " + std::to_string(V));
        }
        ++count;
    }
    if (count == 0) throw std::invalid_argument("cross_entropy_mean: every target is ignored");

    const double* pl = logits.data();
    // softmax probabilities saved for the backward pass
    auto probs = std::make_shared<std::vector<double>>(N * static_cast<std::size_t>(V));
    double loss = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
        const double* row = pl + r * V;
        double mx = row[0];
        for (int v = 1; v < V; ++v) mx = std::max(mx, row[v]);
        double z = 0.0;
        double* pr = probs->data() + r * V;
        for (int v = 0; v < V; ++v) {
            pr[v] = std::exp(row[v] - mx);
            z += pr[v];
        }
        double invz = 1.0 / z;
        for (int v = 0; v < V; ++v) pr[v] *= invz;
        if (targets[r] != ignore_index) {
            loss -= row[targets[r]] - mx - std::log(z);
        }
    }
    loss /= static_cast<double>(count);

    Tensor out = Tensor::scalar(loss);
    out.set_requires_grad(wants_grad(logits));
    if (tape.recording() && out.requires_grad()) {
        ImplPtr il = logits.impl(), io = out.impl();
        auto tgt = std::make_shared<std::vector<int>>(targets);
        tape.record([il, io, probs, tgt, N, V, count, ignore_index] {
            const double* go = out_grad(io);
            if (!go) return;
            double g = go[0] / static_cast<double>(count);
            double* gl = acc_grad(il);
            for (std::size_t r = 0; r < N; ++r) {
                int t = (*tgt)[r];
                if (t == ignore_index) continue;
                const double* pr = probs->data() + r * V;
                double* gr = gl + r * V;
                for (int v = 0; v < V; ++v) gr[v] += g * pr[v];
                gr[t] -= g;
            }
        });
    }
    return out;
}

// ---- l2 normalize rows -------------------------------------------------

Tensor l2_normalize_rows(Tape& tape, const Tensor& x, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("l2_normalize_rows: eps must be positive");
    require_ndim(x, 2, "l2_normalize_rows");
    const int B = x.dim(0), D = x.dim(1);
    Tensor out = make_out({B, D}, wants_grad(x));
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B));
    const double* px = x.data();
    double* po = out.data();
    for (int r = 0; r < B; ++r) {
        const double* xi = px + static_cast<std::size_t>(r) * D;
        double ss = 0.0;
        for (int d = 0; d < D; ++d) ss += xi[d] * xi[d];
        double norm = std::max(std::sqrt(ss), eps);
        (*norms)[static_cast<std::size_t>(r)] = norm;
        double inv = 1.0 / norm;
        double* oi = po + static_cast<std::size_t>(r) * D;
        for (int d = 0; d < D; ++d) oi[d] = xi[d] * inv;
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), io = out.impl();
        tape.record([ix, io, norms, B, D, eps] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gx = acc_grad(ix);
            const double* y = io->data.data();
            for (int r = 0; r < B; ++r) {
                std::size_t off = static_cast<std::size_t>(r) * D;
                double norm = (*norms)[static_cast<std::size_t>(r)];
                double inv = 1.0 / norm;
                if (norm <= eps) {
                    // clamped branch: y = x / eps
                    for (int d = 0; d < D; ++d) gx[off + d] += go[off + d] * inv;
                } else {
                    double dot = 0.0;
                    for (int d = 0; d < D; ++d) dot += go[off + d] * y[off + d];
                    for (int d = 0; d < D; ++d) {
                        gx[off + d] += inv * (go[off + d] - y[off + d] * dot);
                    }
                }
            }
        });
    }
    return out;
}

// ---- pooling / gather / reductions ------------------------------------

Tensor mean_pool_time(Tape& tape, const Tensor& x) {
    require_ndim(x, 3, "mean_pool_time");
    const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
    Tensor out = make_out({B, D}, wants_grad(x));
    const double* px = x.data();
    double* po = out.data();
    const double invT = 1.0 / T;
    for (int b = 0; b < B; ++b) {
        double* ob = po + static_cast<std::size_t>(b) * D;
        for (int t = 0; t < T; ++t) {
            const double* xt = px + (static_cast<std::size_t>(b) * T + t) * D;
            for (int d = 0; d < D; ++d) ob[d] += xt[d] * invT;
        }
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), io = out.impl();
        tape.record([ix, io, B, T, D, invT] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gx = acc_grad(ix);
            for (int b = 0; b < B; ++b) {
                const double* gb = go + static_cast<std::size_t>(b) * D;
                for (int t = 0; t < T; ++t) {
                    double* gt = gx + (static_cast<std::size_t>(b) * T + t) * D;
                    for (int d = 0; d < D; ++d) gt[d] += gb[d] * invT;
                }
            }
        });
    }
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids, Shape out_shape) {
    require_ndim(table, 2, "gather_rows");
    const int V = table.dim(0), D = table.dim(1);
    if (shape_numel(out_shape) != static_cast<std::int64_t>(ids.size()) * D) {
        throw std::invalid_argument("gather_rows: out_shape " + shape_str(out_shape) +
                                    " does not hold " + std::to_string(ids.size()) + " rows of " +
                                    std::to_string(D));
    }
    for (int id : ids) {
        if (id < 0 || id >= V) {
            throw std::invalid_argument("gather_rows: id " + std::to_string(id) +
                                        " outside table of " + std::to_string(V) + " rows");
        }
    }
    Tensor out = make_out(std::move(out_shape), wants_grad(table));
    const double* pt = table.data();
    double* po = out.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::memcpy(po + i * D, pt + static_cast<std::size_t>(ids[i]) * D,
                    sizeof(double) * static_cast<std::size_t>(D));
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr it = table.impl(), io = out.impl();
        auto idv = std::make_shared<std::vector<int>>(ids);
        tape.record([it, io, idv, D] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gt = acc_grad(it);
            for (std::size_t i = 0; i < idv->size(); ++i) {
                double* row = gt + static_cast<std::size_t>((*idv)[i]) * D;
                const double* gi = go + i * D;
                for (int d = 0; d < D; ++d) row[d] += gi[d];
            }
        });
    }
    return out;
}

Tensor identity_mse(Tape& tape, const Tensor& g) {
    require_ndim(g, 2, "identity_mse");
    if (g.dim(0) != g.dim(1)) {
        throw std::invalid_argument("identity_mse: matrix must be square, got " + shape_str(g.shape()));
    }
    const int B = g.dim(0);
    const double* pg = g.data();
    double acc = 0.0;
    for (int i = 0; i < B; ++i) {
        for (int j = 0; j < B; ++j) {
            double d = pg[static_cast<std::size_t>(i) * B + j] - (i == j ? 1.0 : 0.0);
            acc += d * d;
        }
    }
    const double invBB = 1.0 / (static_cast<double>(B) * B);
    Tensor out = Tensor::scalar(acc * invBB);
    out.set_requires_grad(wants_grad(g));
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ig = g.impl(), io = out.impl();
        tape.record([ig, io, B, invBB] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gg = acc_grad(ig);
            for (int i = 0; i < B; ++i) {
                for (int j = 0; j < B; ++j) {
                    std::size_t idx = static_cast<std::size_t>(i) * B + j;
                    gg[idx] += go[0] * 2.0 * invBB * (ig->data[idx] - (i == j ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    const std::size_t n = static_cast<std::size_t>(x.numel());
    const double* px = x.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += px[i];
    Tensor out = Tensor::scalar(acc);
    out.set_requires_grad(wants_grad(x));
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), io = out.impl();
        tape.record([ix, io, n] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gx = acc_grad(ix);
            for (std::size_t i = 0; i < n; ++i) gx[i] += go[0];
        });
    }
    return out;
}

// ---- folded linear maps ------------------------------------------------

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    require_ndim(w, 2, "linear");
    const int D = w.dim(0), M = w.dim(1);
    if (x.shape().back() != D) {
        throw std::invalid_argument("linear: last axis of " + shape_str(x.shape()) +
                                    " does not match weight " + shape_str(w.shape()));
    }
    const int rows = static_cast<int>(x.numel() / D);
    Shape out_shape = x.shape();
    out_shape.back() = M;
    bool rg = wants_grad(x) || wants_grad(w) || (b.defined() && wants_grad(b));
    Tensor out = make_out(std::move(out_shape), rg);
    mm_acc(x.data(), w.data(), out.data(), rows, D, M);
    if (b.defined()) {
        require_ndim(b, 1, "linear");
        if (b.dim(0) != M) throw std::invalid_argument("linear: bias does not match output width");
        double* po = out.data();
        const double* pb = b.data();
        for (int r = 0; r < rows; ++r) {
            double* orow = po + static_cast<std::size_t>(r) * M;
            for (int m = 0; m < M; ++m) orow[m] += pb[m];
        }
    }
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), iw = w.impl(), io = out.impl();
        ImplPtr ib = b.defined() ? b.impl() : nullptr;
        tape.record([ix, iw, ib, io, rows, D, M] {
            const double* go = out_grad(io);
            if (!go) return;
            if (ix->requires_grad) mm_nt_acc(go, iw->data.data(), acc_grad(ix), rows, M, D);
            if (iw->requires_grad) mm_tn_acc(ix->data.data(), go, acc_grad(iw), rows, D, M);
            if (ib && ib->requires_grad) {
                double* gb = acc_grad(ib);
                for (int r = 0; r < rows; ++r) {
                    const double* grow = go + static_cast<std::size_t>(r) * M;
                    for (int m = 0; m < M; ++m) gb[m] += grow[m];
                }
            }
        });
    }
    return out;
}

Tensor linear_nt(Tape& tape, const Tensor& x, const Tensor& table) {
    require_ndim(table, 2, "linear_nt");
    const int N = table.dim(0), D = table.dim(1);
    if (x.shape().back() != D) {
        throw std::invalid_argument("linear_nt: last axis of " + shape_str(x.shape()) +
                                    " does not match table " + shape_str(table.shape()));
    }
    const int rows = static_cast<int>(x.numel() / D);
    Shape out_shape = x.shape();
    out_shape.back() = N;
    Tensor out = make_out(std::move(out_shape), wants_grad(x) || wants_grad(table));
    mm_nt_acc(x.data(), table.data(), out.data(), rows, D, N);
    if (tape.recording() && out.requires_grad()) {
        ImplPtr ix = x.impl(), it = table.impl(), io = out.impl();
        tape.record([ix, it, io, rows, D, N] {
            const double* go = out_grad(io);
            if (!go) return;
            if (ix->requires_grad) mm_acc(go, it->data.data(), acc_grad(ix), rows, N, D);
            if (it->requires_grad) mm_tn_acc(go, ix->data.data(), acc_grad(it), rows, N, D);
        });
    }
    return out;
}

// ---- causal attention --------------------------------------------------

Tensor causal_attention(Tape& tape, const Tensor& qkv, int n_heads, const std::vector<int>* key_mask) {
    require_ndim(qkv, 3, "causal_attention");
    const int B = qkv.dim(0), T = qkv.dim(1);
    if (qkv.dim(2) % 3 != 0) {
        throw std::invalid_argument("causal_attention: last axis of " + shape_str(qkv.shape()) +
                                    " is not 3*d_model");
    }
    const int D = qkv.dim(2) / 3;
    if (n_heads <= 0 || D % n_heads != 0) {
        throw std::invalid_argument("causal_attention: d_model " + std::to_string(D) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (key_mask && static_cast<int>(key_mask->size()) != B * T) {
        throw std::invalid_argument("causal_attention: mask length does not match BxT");
    }
    const int H = n_heads, hd = D / n_heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    const std::size_t row3 = static_cast<std::size_t>(3) * D;

    Tensor out = make_out({B, T, D}, wants_grad(qkv));
    const bool save_weights = tape.recording() && out.requires_grad();
    // attention weights kept per (b,h) for the backward pass
    auto weights = save_weights
                       ? std::make_shared<std::vector<double>>(
                             static_cast<std::size_t>(B) * H * T * T)
                       : nullptr;

    const double* pq = qkv.data();
    double* po = out.data();
    std::vector<double> scores(static_cast<std::size_t>(T));
    for (int b = 0; b < B; ++b) {
        const double* base = pq + static_cast<std::size_t>(b) * T * row3;
        const int* mask = key_mask ? key_mask->data() + static_cast<std::size_t>(b) * T : nullptr;
        for (int h = 0; h < H; ++h) {
            const std::size_t qo = static_cast<std::size_t>(h) * hd;
            const std::size_t ko = static_cast<std::size_t>(D) + h * hd;
            const std::size_t vo = static_cast<std::size_t>(2) * D + h * hd;
            for (int t = 0; t < T; ++t) {
                const double* qrow = base + static_cast<std::size_t>(t) * row3 + qo;
                double mx = -std::numeric_limits<double>::infinity();
                for (int u = 0; u <= t; ++u) {
                    if (mask && mask[u] == 0) {
                        scores[static_cast<std::size_t>(u)] = -std::numeric_limits<double>::infinity();
                        continue;
                    }
                    const double* krow = base + static_cast<std::size_t>(u) * row3 + ko;
                    double s = 0.0;
                    for (int d = 0; d < hd; ++d) s += qrow[d] * krow[d];
                    s *= inv_sqrt_hd;
                    scores[static_cast<std::size_t>(u)] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                if (mx > -std::numeric_limits<double>::infinity()) {
                    for (int u = 0; u <= t; ++u) {
                        double& s = scores[static_cast<std::size_t>(u)];
                        s = (s == -std::numeric_limits<double>::infinity()) ? 0.0 : std::exp(s - mx);
                        z += s;
                    }
                }
                double invz = z > 0.0 ? 1.0 / z : 0.0;
                double* orow = po + (static_cast<std::size_t>(b) * T + t) * D + qo;
                for (int u = 0; u <= t; ++u) {
                    double a = invz > 0.0 ? scores[static_cast<std::size_t>(u)] * invz : 0.0;
                    if (save_weights) {
                        (*weights)[((static_cast<std::size_t>(b) * H + h) * T + t) * T + u] = a;
                    }
                    if (a == 0.0) continue;
                    const double* vrow = base + static_cast<std::size_t>(u) * row3 + vo;
                    for (int d = 0; d < hd; ++d) orow[d] += a * vrow[d];
                }
            }
        }
    }

    if (save_weights) {
        ImplPtr iq = qkv.impl(), io = out.impl();
        tape.record([iq, io, weights, B, T, D, H, hd, inv_sqrt_hd, row3] {
            const double* go = out_grad(io);
            if (!go) return;
            double* gq = acc_grad(iq);
            const double* pq = iq->data.data();
            std::vector<double> dA(static_cast<std::size_t>(T));
            for (int b = 0; b < B; ++b) {
                const double* base = pq + static_cast<std::size_t>(b) * T * row3;
                double* gbase = gq + static_cast<std::size_t>(b) * T * row3;
                for (int h = 0; h < H; ++h) {
                    const std::size_t qo = static_cast<std::size_t>(h) * hd;
                    const std::size_t ko = static_cast<std::size_t>(D) + h * hd;
                    const std::size_t vo = static_cast<std::size_t>(2) * D + h * hd;
                    const double* A = weights->data() + ((static_cast<std::size_t>(b) * H + h) * T) * T;
                    for (int t = 0; t < T; ++t) {
                        const double* grow = go + (static_cast<std::size_t>(b) * T + t) * D + qo;
                        const double* arow = A + static_cast<std::size_t>(t) * T;
                        // dV and dA
                        double dot = 0.0;
                        for (int u = 0; u <= t; ++u) {
                            const double* vrow = base + static_cast<std::size_t>(u) * row3 + vo;
                            double da = 0.0;
                            for (int d = 0; d < hd; ++d) da += grow[d] * vrow[d];
                            dA[static_cast<std::size_t>(u)] = da;
                            dot += da * arow[u];
                            if (arow[u] != 0.0) {
                                double* gv = gbase + static_cast<std::size_t>(u) * row3 + vo;
                                for (int d = 0; d < hd; ++d) gv[d] += arow[u] * grow[d];
                            }
                        }
                        // softmax backward, then into q and k
                        const double* qrow = base + static_cast<std::size_t>(t) * row3 + qo;
                        double* gqrow = gbase + static_cast<std::size_t>(t) * row3 + qo;
                        for (int u = 0; u <= t; ++u) {
                            double ds = arow[u] * (dA[static_cast<std::size_t>(u)] - dot) * inv_sqrt_hd;
                            if (ds == 0.0) continue;
                            const double* krow = base + static_cast<std::size_t>(u) * row3 + ko;
                            double* gkrow = gbase + static_cast<std::size_t>(u) * row3 + ko;
                            for (int d = 0; d < hd; ++d) {
                                gqrow[d] += ds * krow[d];
                                gkrow[d] += ds * qrow[d];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---- grad check --------------------------------------------------------

double grad_check(const std::function<Tensor(Tape&)>& f, Tensor x, double h) {
    x.set_requires_grad(true);
    x.zero_grad();
    {
        Tape tape(true);
        Tensor loss = f(tape);
        tape.backward(loss);
    }
    std::vector<double> analytic(x.grad(), x.grad() + x.numel());

    double max_err = 0.0;
    double* px = x.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        double saved = px[i];
        px[i] = saved + h;
        Tape tp(false);
        double fp = f(tp).item();
        px[i] = saved - h;
        Tape tm(false);
        double fm = f(tm).item();
        px[i] = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double err = std::abs(analytic[static_cast<std::size_t>(i)] - numeric) /
                     std::max(1.0, std::abs(analytic[static_cast<std::size_t>(i)]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace clab
