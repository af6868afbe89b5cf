#pragma once

#include <string>
#include <vector>

namespace clab {

// Pooled hidden states, one row per sequence.
struct HiddenBatch {
    int rows = 0;  // N
    int cols = 0;  // D
    std::vector<double> data;  // row-major N x D

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct SpectrumReport {
    std::vector<double> eigenvalues;   // descending, floored at +1e-10
    std::vector<double> probabilities; // eigenvalues normalized to sum 1
    double effective_rank = 0.0;       // exp(-sum p ln p)
};

// Sample covariance of centered rows with 1/(N-1) normalization. N >= 2.
std::vector<double> covariance(const HiddenBatch& h);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, clamped at
// zero and sorted descending. Throws if the input is asymmetric beyond 1e-8.
std::vector<double> symmetric_eigenvalues(const std::vector<double>& c, int d);

SpectrumReport spectrum(const HiddenBatch& h);
double effective_rank(const HiddenBatch& h);

// Pooled unique-n-gram / total-n-gram ratio. Every sequence must have >= n tokens.
double distinct_n(const std::vector<std::vector<int>>& sequences, int n = 2);

// Plain matrix file: "N D" header line, then one whitespace-separated row per line.
void save_matrix(const HiddenBatch& h, const std::string& path);
HiddenBatch load_matrix(const std::string& path);

}  // namespace clab
