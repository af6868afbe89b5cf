#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "clab/rng.hpp"
#include "clab/spectral.hpp"

using namespace clab;

namespace {

HiddenBatch batch(int rows, int cols, std::vector<double> data) {
    return HiddenBatch{rows, cols, std::move(data)};
}

// characteristic-polynomial eigenvalues, independent of the Jacobi path
std::vector<double> eig2x2(double a, double b, double d) {
    double tr = a + d, det = a * d - b * b;
    double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
    return {tr / 2.0 + disc, tr / 2.0 - disc};
}

std::vector<double> eig3x3(const std::vector<double>& m) {
    // trigonometric solution for symmetric 3x3
    double p1 = m[1] * m[1] + m[2] * m[2] + m[5] * m[5];
    double q = (m[0] + m[4] + m[8]) / 3.0;
    double p2 = (m[0] - q) * (m[0] - q) + (m[4] - q) * (m[4] - q) + (m[8] - q) * (m[8] - q) + 2.0 * p1;
    double p = std::sqrt(p2 / 6.0);
    if (p == 0.0) return {q, q, q};
    // B = (A - qI)/p, r = det(B)/2
    auto bij = [&](int i, int j) { return ((m[i * 3 + j]) - (i == j ? q : 0.0)) / p; };
    double r = (bij(0, 0) * (bij(1, 1) * bij(2, 2) - bij(1, 2) * bij(2, 1)) -
                bij(0, 1) * (bij(1, 0) * bij(2, 2) - bij(1, 2) * bij(2, 0)) +
                bij(0, 2) * (bij(1, 0) * bij(2, 1) - bij(1, 1) * bij(2, 0))) / 2.0;
    r = std::clamp(r, -1.0, 1.0);
    double phi = std::acos(r) / 3.0;
    double e1 = q + 2.0 * p * std::cos(phi);
    double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    double e2 = 3.0 * q - e1 - e3;
    std::vector<double> e{e1, e2, e3};
    std::sort(e.begin(), e.end(), std::greater<double>());
    return e;
}

}  // namespace

TEST_CASE("covariance closed forms") {
    // identical rows -> zero matrix
    auto c0 = covariance(batch(2, 2, {3, 4, 3, 4}));
    for (double v : c0) CHECK(v == 0.0);

    // rows [1,0] and [-1,0] -> [[2,0],[0,0]]
    auto c1 = covariance(batch(2, 2, {1, 0, -1, 0}));
    CHECK(c1[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c1[1] == 0.0);
    CHECK(c1[2] == 0.0);
    CHECK(c1[3] == 0.0);

    CHECK_THROWS(covariance(batch(1, 2, {1, 0})));
}

TEST_CASE("covariance is symmetric on random inputs") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        int N = 3 + static_cast<int>(rng.randint(10));
        int D = 2 + static_cast<int>(rng.randint(6));
        std::vector<double> d(static_cast<std::size_t>(N) * D);
        for (auto& v : d) v = rng.normal() * 3.0;
        auto c = covariance(batch(N, D, std::move(d)));
        for (int i = 0; i < D; ++i) {
            for (int j = 0; j < D; ++j) {
                CHECK(std::abs(c[i * D + j] - c[j * D + i]) < 1e-12);
            }
        }
    }
}

TEST_CASE("symmetric_eigenvalues closed forms") {
    auto e1 = symmetric_eigenvalues({1, 0, 0, 0, 1, 0, 0, 0, 1}, 3);
    for (double v : e1) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    auto e2 = symmetric_eigenvalues({3, 0, 0, 1}, 2);
    CHECK(e2[0] == doctest::Approx(3.0));
    CHECK(e2[1] == doctest::Approx(1.0));

    auto e3 = symmetric_eigenvalues({2, 1, 1, 2}, 2);
    CHECK(e3[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e3[1] == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS(symmetric_eigenvalues({1, 2, 0, 1}, 2));
}

TEST_CASE("eigensolver matches characteristic polynomial on random 2x2 and 3x3") {
    Rng rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        double a = rng.normal() * 2, b = rng.normal(), d = rng.normal() * 2;
        auto got = symmetric_eigenvalues({a, b, b, d}, 2);
        auto want = eig2x2(a, b, d);
        // jacobi clamps at zero; compare against clamped roots
        for (auto& w : want) w = std::max(w, 0.0);
        std::sort(want.begin(), want.end(), std::greater<double>());
        CHECK(std::abs(got[0] - want[0]) < 1e-9);
        CHECK(std::abs(got[1] - want[1]) < 1e-9);
    }
    for (int trial = 0; trial < 30; ++trial) {
        double a = rng.normal(), b = rng.normal(), c = rng.normal();
        double d = rng.normal(), e = rng.normal(), f = rng.normal();
        // build PSD-ish symmetric by squaring magnitude of diagonal
        std::vector<double> m{a * a + 1, b, c, b, d * d + 1, e, c, e, f * f + 1};
        auto got = symmetric_eigenvalues(m, 3);
        auto want = eig3x3(m);
        for (auto& w : want) w = std::max(w, 0.0);
        std::sort(want.begin(), want.end(), std::greater<double>());
        for (int i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-9);
    }
}

TEST_CASE("effective rank closed forms") {
    // two equal covariance modes -> 2.0
    HiddenBatch two = batch(4, 2, {1, 0, -1, 0, 0, 1, 0, -1});
    CHECK(effective_rank(two) == doctest::Approx(2.0).epsilon(1e-9));

    // rank one -> 1.0
    HiddenBatch one = batch(4, 3, {1, 2, 3, 2, 4, 6, -1, -2, -3, 3, 6, 9});
    CHECK(effective_rank(one) == doctest::Approx(1.0).epsilon(1e-6));

    // spectrum {3,1}
    double s3 = std::sqrt(3.0);
    HiddenBatch skew = batch(4, 2, {s3, 0, -s3, 0, 0, 1, 0, -1});
    double oracle = std::exp(-(0.75 * std::log(0.75) + 0.25 * std::log(0.25)));
    CHECK(effective_rank(skew) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(std::abs(effective_rank(skew) - 1.7548) < 1e-4);
}

TEST_CASE("isotropic gaussian batch has near-full rank") {
    Rng rng(42);
    int N = 2000, D = 8;
    std::vector<double> d(static_cast<std::size_t>(N) * D);
    for (auto& v : d) v = rng.normal();
    CHECK(effective_rank(batch(N, D, std::move(d))) >= 7.5);
}

TEST_CASE("effective rank invariances") {
    Rng rng(12);
    int N = 40, D = 6;
    std::vector<double> d(static_cast<std::size_t>(N) * D);
    for (auto& v : d) v = rng.normal() * 1.7;
    HiddenBatch h = batch(N, D, d);
    double base = effective_rank(h);
    CHECK(base >= 1.0);
    CHECK(base <= D);

    SUBCASE("row permutation") {
        HiddenBatch p = h;
        for (int r = N - 1; r > 0; --r) {
            int s = static_cast<int>(rng.randint(static_cast<std::uint64_t>(r + 1)));
            for (int c = 0; c < D; ++c) std::swap(p.at(r, c), p.at(s, c));
        }
        CHECK(effective_rank(p) == doctest::Approx(base).epsilon(1e-9));
    }
    SUBCASE("global scaling") {
        for (double c : {2.5, -3.0, 1e4}) {
            HiddenBatch s = h;
            for (auto& v : s.data) v *= c;
            CHECK(effective_rank(s) == doctest::Approx(base).epsilon(1e-9));
        }
    }
    SUBCASE("orthogonal rotation of feature space") {
        // random orthogonal D x D via Gram-Schmidt
        std::vector<double> q(static_cast<std::size_t>(D) * D);
        for (auto& v : q) v = rng.normal();
        for (int i = 0; i < D; ++i) {
            for (int j = 0; j < i; ++j) {
                double dot = 0.0;
                for (int k = 0; k < D; ++k) dot += q[i * D + k] * q[j * D + k];
                for (int k = 0; k < D; ++k) q[i * D + k] -= dot * q[j * D + k];
            }
            double norm = 0.0;
            for (int k = 0; k < D; ++k) norm += q[i * D + k] * q[i * D + k];
            norm = std::sqrt(norm);
            for (int k = 0; k < D; ++k) q[i * D + k] /= norm;
        }
        HiddenBatch rot = batch(N, D, std::vector<double>(static_cast<std::size_t>(N) * D, 0.0));
        for (int r = 0; r < N; ++r) {
            for (int c = 0; c < D; ++c) {
                double acc = 0.0;
                for (int k = 0; k < D; ++k) acc += h.at(r, k) * q[c * D + k];
                rot.at(r, c) = acc;
            }
        }
        CHECK(effective_rank(rot) == doctest::Approx(base).epsilon(1e-8));
    }
    SUBCASE("appending exact duplicates of every row") {
        HiddenBatch dup = batch(2 * N, D, {});
        dup.data = h.data;
        dup.data.insert(dup.data.end(), h.data.begin(), h.data.end());
        CHECK(std::abs(effective_rank(dup) - base) < 1e-6);
    }
}

TEST_CASE("spectrum report invariants") {
    Rng rng(8);
    int N = 30, D = 5;
    std::vector<double> d(static_cast<std::size_t>(N) * D);
    for (auto& v : d) v = rng.normal();
    SpectrumReport rep = spectrum(batch(N, D, std::move(d)));
    double psum = 0.0;
    for (double p : rep.probabilities) psum += p;
    CHECK(std::abs(psum - 1.0) < 1e-10);
    for (std::size_t i = 1; i < rep.eigenvalues.size(); ++i) {
        CHECK(rep.eigenvalues[i] <= rep.eigenvalues[i - 1]);
        CHECK(rep.eigenvalues[i] > 0.0);
    }
    CHECK(rep.effective_rank >= 1.0);
    CHECK(rep.effective_rank <= std::min(N - 1, D) + 1e-9);
}

TEST_CASE("distinct_n") {
    // one repeated token everywhere: a single unique bigram
    std::vector<std::vector<int>> rep(3, std::vector<int>(10, 7));
    CHECK(distinct_n(rep, 2) == doctest::Approx(1.0 / 27.0));

    std::vector<std::vector<int>> uniq{{1, 2, 3, 4}, {5, 6, 7, 8}};
    CHECK(distinct_n(uniq, 2) == 1.0);

    // "abab","abab" as bytes
    std::vector<std::vector<int>> ab{{97, 98, 97, 98}, {97, 98, 97, 98}};
    CHECK(distinct_n(ab, 2) == doctest::Approx(2.0 / 6.0));

    CHECK_THROWS(distinct_n({}, 2));
    CHECK_THROWS(distinct_n({{1}}, 2));
}

TEST_CASE("matrix file round trip") {
    Rng rng(77);
    HiddenBatch h = batch(5, 3, {});
    h.data.resize(15);
    for (auto& v : h.data) v = rng.normal() * 1e3;
    std::string path = "build/test_matrix.tmp";
    save_matrix(h, path);
    HiddenBatch r = load_matrix(path);
    CHECK(r.rows == h.rows);
    CHECK(r.cols == h.cols);
    for (std::size_t i = 0; i < h.data.size(); ++i) CHECK(r.data[i] == h.data[i]);
    std::remove(path.c_str());
    CHECK_THROWS(load_matrix("build/does_not_exist.tmp"));
}
