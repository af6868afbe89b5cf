#include "clab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace clab {

static void check_batch(const HiddenBatch& h) {
    if (h.rows < 2) throw std::invalid_argument("hidden batch needs at least 2 rows, got " + std::to_string(h.rows));
    if (h.cols < 1) throw std::invalid_argument("hidden batch needs at least 1 column");
    if (static_cast<std::size_t>(h.rows) * h.cols != h.data.size()) {
        throw std::invalid_argument("hidden batch data length does not match rows*cols");
    }
    for (double v : h.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("hidden batch contains non-finite entries");
    }
}

std::vector<double> covariance(const HiddenBatch& h) {
    check_batch(h);
    const int N = h.rows, D = h.cols;
    std::vector<double> mean(static_cast<std::size_t>(D), 0.0);
    for (int r = 0; r < N; ++r) {
        for (int c = 0; c < D; ++c) mean[static_cast<std::size_t>(c)] += h.at(r, c);
    }
    for (double& m : mean) m /= N;

    std::vector<double> cov(static_cast<std::size_t>(D) * D, 0.0);
    std::vector<double> row(static_cast<std::size_t>(D));
    const double norm = 1.0 / (N - 1);
    for (int r = 0; r < N; ++r) {
        for (int c = 0; c < D; ++c) row[static_cast<std::size_t>(c)] = h.at(r, c) - mean[static_cast<std::size_t>(c)];
        for (int i = 0; i < D; ++i) {
            double ri = row[static_cast<std::size_t>(i)];
            if (ri == 0.0) continue;
            for (int j = i; j < D; ++j) {
                cov[static_cast<std::size_t>(i) * D + j] += ri * row[static_cast<std::size_t>(j)] * norm;
            }
        }
    }
    for (int i = 0; i < D; ++i) {
        for (int j = 0; j < i; ++j) {
            cov[static_cast<std::size_t>(i) * D + j] = cov[static_cast<std::size_t>(j) * D + i];
        }
    }
    return cov;
}

std::vector<double> symmetric_eigenvalues(const std::vector<double>& c, int d) {
    if (d < 1 || c.size() != static_cast<std::size_t>(d) * d) {
        throw std::invalid_argument("symmetric_eigenvalues: bad matrix size");
    }
    double scale = 0.0;
    for (double v : c) scale = std::max(scale, std::abs(v));
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            double asym = std::abs(c[static_cast<std::size_t>(i) * d + j] - c[static_cast<std::size_t>(j) * d + i]);
            if (asym > 1e-8 * std::max(1.0, scale)) {
                throw std::invalid_argument("symmetric_eigenvalues: matrix asymmetric beyond tolerance");
            }
        }
    }

    std::vector<double> a(c);
    // symmetrize exactly so rotations stay consistent
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            double avg = 0.5 * (a[static_cast<std::size_t>(i) * d + j] + a[static_cast<std::size_t>(j) * d + i]);
            a[static_cast<std::size_t>(i) * d + j] = avg;
            a[static_cast<std::size_t>(j) * d + i] = avg;
        }
    }

    auto off_norm = [&] {
        double s = 0.0;
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                if (i != j) s += a[static_cast<std::size_t>(i) * d + j] * a[static_cast<std::size_t>(i) * d + j];
            }
        }
        return std::sqrt(s);
    };

    // tolerance relative to the matrix magnitude; exact 1e-12 absolute is
    // unreachable for large-scaled inputs in double precision
    const double tol = 1e-12 * std::max(1.0, scale);
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double apq = a[static_cast<std::size_t>(p) * d + q];
                if (apq == 0.0) continue;
                double app = a[static_cast<std::size_t>(p) * d + p];
                double aqq = a[static_cast<std::size_t>(q) * d + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double cs = 1.0 / std::sqrt(t * t + 1.0);
                double sn = t * cs;
                for (int k = 0; k < d; ++k) {
                    double akp = a[static_cast<std::size_t>(k) * d + p];
                    double akq = a[static_cast<std::size_t>(k) * d + q];
                    a[static_cast<std::size_t>(k) * d + p] = cs * akp - sn * akq;
                    a[static_cast<std::size_t>(k) * d + q] = sn * akp + cs * akq;
                }
                for (int k = 0; k < d; ++k) {
                    double apk = a[static_cast<std::size_t>(p) * d + k];
                    double aqk = a[static_cast<std::size_t>(q) * d + k];
                    a[static_cast<std::size_t>(p) * d + k] = cs * apk - sn * aqk;
                    a[static_cast<std::size_t>(q) * d + k] = sn * apk + cs * aqk;
                }
            }
        }
    }

    std::vector<double> eig(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) eig[static_cast<std::size_t>(i)] = std::max(a[static_cast<std::size_t>(i) * d + i], 0.0);
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

SpectrumReport spectrum(const HiddenBatch& h) {
    std::vector<double> cov = covariance(h);
    std::vector<double> eig = symmetric_eigenvalues(cov, h.cols);
    SpectrumReport rep;
    rep.eigenvalues.reserve(eig.size());
    double total = 0.0;
    for (double e : eig) {
        double v = e + 1e-10;  // degenerate-spectrum floor
        rep.eigenvalues.push_back(v);
        total += v;
    }
    rep.probabilities.reserve(eig.size());
    double entropy = 0.0;
    for (double v : rep.eigenvalues) {
        double p = v / total;
        rep.probabilities.push_back(p);
        entropy -= p * std::log(p);
    }
    rep.effective_rank = std::exp(entropy);
    return rep;
}

double effective_rank(const HiddenBatch& h) { return spectrum(h).effective_rank; }

double distinct_n(const std::vector<std::vector<int>>& sequences, int n) {
    if (n < 1) throw std::invalid_argument("distinct_n: n must be positive");
    if (sequences.empty()) throw std::invalid_argument("distinct_n: empty input");
    std::unordered_set<std::string> seen;
    std::size_t total = 0;
    for (const auto& seq : sequences) {
        if (static_cast<int>(seq.size()) < n) {
            throw std::invalid_argument("distinct_n: sequence shorter than n");
        }
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seq.size(); ++i) {
            std::string key;
            key.reserve(static_cast<std::size_t>(n) * 4);
            for (int j = 0; j < n; ++j) {
                key.append(reinterpret_cast<const char*>(&seq[i + static_cast<std::size_t>(j)]), sizeof(int));
            }
            seen.insert(std::move(key));
            ++total;
        }
    }
    return static_cast<double>(seen.size()) / static_cast<double>(total);
}

void save_matrix(const HiddenBatch& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << h.rows << " " << h.cols << "\n";
    char buf[32];
    for (int r = 0; r < h.rows; ++r) {
        for (int c = 0; c < h.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", h.at(r, c));
            out << buf << (c + 1 == h.cols ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

HiddenBatch load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    HiddenBatch h;
    if (!(in >> h.rows >> h.cols) || h.rows < 1 || h.cols < 1) {
        throw std::runtime_error("bad matrix header in " + path);
    }
    h.data.resize(static_cast<std::size_t>(h.rows) * h.cols);
    for (double& v : h.data) {
        if (!(in >> v)) throw std::runtime_error("truncated matrix file " + path);
    }
    return h;
}

}  // namespace clab
