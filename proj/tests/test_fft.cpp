#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cran/fft.hpp"

using namespace cran;

TEST_CASE("forward-inverse round trip") {
    std::mt19937_64 g(1);
    std::normal_distribution<double> nd;
    std::vector<cplx> x(1024);
    for (auto& v : x) v = {nd(g), nd(g)};
    auto y = fft::inverse(fft::forward(x));
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::abs(y[i] - x[i]) < 1e-12);
    }
}

TEST_CASE("tone lands on its bin, forward unscaled") {
    const std::size_t n = 256;
    const int k = 37;
    std::vector<cplx> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::polar(1.0, 2.0 * std::numbers::pi * k * double(i) / double(n));
    auto s = fft::forward(x);
    CHECK(std::abs(s[k]) == doctest::Approx(double(n)).epsilon(1e-9));
    double rest = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (int(i) != k) rest = std::max(rest, std::abs(s[i]));
    CHECK(rest < 1e-9 * n);
}

TEST_CASE("non power of two lengths work") {
    std::vector<cplx> x(300, cplx{1.0, 0.0});
    auto s = fft::forward(x);
    CHECK(std::abs(s[0]) == doctest::Approx(300.0));
    auto y = fft::inverse(s);
    CHECK(std::abs(y[5] - cplx{1.0, 0.0}) < 1e-12);
}

TEST_CASE("fftshift / ifftshift invert each other, both parities") {
    for (std::size_t n : {8u, 9u}) {
        std::vector<int> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = int(i);
        auto w = fft::ifftshift(fft::fftshift(v));
        CHECK(w == v);
    }
    // even n: DC moves to n/2
    std::vector<int> v{0, 1, 2, 3};
    auto s = fft::fftshift(v);
    CHECK(s[2] == 0);
}

TEST_CASE("next_pow2") {
    CHECK(fft::next_pow2(1) == 1);
    CHECK(fft::next_pow2(2) == 2);
    CHECK(fft::next_pow2(3) == 4);
    CHECK(fft::next_pow2(750001) == (1u << 20));
}
