#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "presspose/common.hpp"
#include "presspose/kernels.hpp"

using namespace presspose;
using kern::KernelSet;

namespace {

// Independent oracle: textbook triple loops, no shared code with the library.
void naive_gemm(const double* a, const double* b, double* c, int m, int n, int k,
                bool ta, bool tb, bool accumulate) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (int l = 0; l < k; ++l) {
                double av = ta ? a[l * m + i] : a[i * k + l];
                double bv = tb ? b[j * k + l] : b[l * n + j];
                s += av * bv;
            }
            c[i * n + j] = s;
        }
}

std::vector<double> random_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

void check_close(const std::vector<double>& got, const std::vector<double>& want,
                 double tol) {
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
        double err = std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i]));
        CHECK(err <= tol);
    }
}

void exercise_set(const KernelSet& ks, double tol) {
    Rng rng(7);
    // Odd sizes catch remainder loops; include degenerate k=1, n=1.
    const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {13, 9, 17},
                             {4, 1, 6}, {16, 24, 32}, {5, 31, 2}};
    for (auto [m, n, k] : shapes) {
        auto a = random_vec(rng, size_t(m) * k);
        auto b = random_vec(rng, size_t(k) * n);
        auto at = random_vec(rng, size_t(k) * m);   // A^T layout for gemm_tn
        auto bt = random_vec(rng, size_t(n) * k);   // B^T layout for gemm_nt
        auto seed = random_vec(rng, size_t(m) * n);

        for (bool acc : {false, true}) {
            auto want = seed, got = seed;
            naive_gemm(a.data(), b.data(), want.data(), m, n, k, false, false, acc);
            ks.gemm_nn(m, k, n, a.data(), b.data(), got.data(), acc);
            check_close(got, want, tol);

            want = seed; got = seed;
            naive_gemm(a.data(), bt.data(), want.data(), m, n, k, false, true, acc);
            ks.gemm_nt(m, k, n, a.data(), bt.data(), got.data(), acc);
            check_close(got, want, tol);

            want = seed; got = seed;
            naive_gemm(at.data(), b.data(), want.data(), m, n, k, true, false, acc);
            ks.gemm_tn(m, k, n, at.data(), b.data(), got.data(), acc);
            check_close(got, want, tol);
        }

        double want_dot = 0;
        for (int i = 0; i < m * k; ++i) want_dot += a[i] * a[i];
        CHECK(std::abs(ks.dot(size_t(m) * k, a.data(), a.data()) - want_dot) <=
              tol * std::max(1.0, std::abs(want_dot)));

        auto y = random_vec(rng, a.size());
        auto want_axpy = y;
        for (size_t i = 0; i < a.size(); ++i) want_axpy[i] += 0.37 * a[i];
        ks.axpy(a.size(), 0.37, a.data(), y.data());
        check_close(y, want_axpy, tol);
    }
}

}  // namespace

TEST_CASE("scalar kernels match the naive oracle") {
    exercise_set(kern::scalar_set(), 1e-13);
}

TEST_CASE("avx2 kernels match the naive oracle") {
    const KernelSet* ks = kern::avx2_set();
    if (!ks) return;  // host without AVX2+FMA
    exercise_set(*ks, 1e-12);
}

TEST_CASE("scalar and avx2 agree to accumulation-order tolerance") {
    const KernelSet* av = kern::avx2_set();
    if (!av) return;
    const KernelSet& sc = kern::scalar_set();
    Rng rng(11);
    int m = 17, n = 23, k = 41;
    auto a = random_vec(rng, size_t(m) * k);
    auto b = random_vec(rng, size_t(k) * n);
    std::vector<double> c1(size_t(m) * n, 0), c2 = c1;
    sc.gemm_nn(m, k, n, a.data(), b.data(), c1.data(), false);
    av->gemm_nn(m, k, n, a.data(), b.data(), c2.data(), false);
    check_close(c2, c1, 1e-12);
}

TEST_CASE("dispatch selects a real kernel set and force() round-trips") {
    std::string cur = kern::active().name;
    CHECK((cur == "scalar" || cur == "avx2"));

    kern::force("scalar");
    CHECK(std::string(kern::active().name) == "scalar");
    if (kern::avx2_set()) {
        kern::force("avx2");
        CHECK(std::string(kern::active().name) == "avx2");
    } else {
        CHECK_THROWS_AS(kern::force("avx2"), Error);
    }
    kern::force("auto");
    CHECK_THROWS_AS(kern::force("sse9"), Error);
}

TEST_CASE("rng primitives are deterministic and in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        double ua = a.uniform(), ub = b.uniform();
        CHECK(ua == ub);
        CHECK(ua >= 0.0);
        CHECK(ua < 1.0);
    }
    Rng c(42);
    for (int i = 0; i < 100; ++i) {
        uint64_t v = c.below(7);
        CHECK(v < 7);
    }
    // trunc_normal stays within +-2 sigma by construction.
    Rng d(9);
    for (int i = 0; i < 2000; ++i) CHECK(std::abs(d.trunc_normal(0.02)) <= 0.04 + 1e-12);
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(5, 0) == mix_seed(5, 0));
}
