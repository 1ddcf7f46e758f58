#pragma once

#include <vector>

#include "cran/types.hpp"

namespace cran::fft {

// In-place complex FFT. Forward is unscaled; inverse applies 1/N.
// Any length is accepted; powers of two are fastest. Thread safe
// (plans are cached per thread, plan creation is serialized).
void transform(std::vector<cplx>& data, bool inverse);

std::vector<cplx> forward(const std::vector<cplx>& in);
std::vector<cplx> inverse(const std::vector<cplx>& in);

// Swap lower and upper halves so index 0 becomes the most negative
// frequency. For odd N the DC bin ends up at index N/2.
template <typename T>
std::vector<T> fftshift(const std::vector<T>& in) {
    const std::size_t n = in.size();
    std::vector<T> out(n);
    const std::size_t half = (n + 1) / 2;  // count of non-negative bins
    for (std::size_t i = 0; i < n; ++i) out[i] = in[(i + half) % n];
    return out;
}

template <typename T>
std::vector<T> ifftshift(const std::vector<T>& in) {
    const std::size_t n = in.size();
    std::vector<T> out(n);
    const std::size_t half = n / 2;  // undo fftshift for any parity
    for (std::size_t i = 0; i < n; ++i) out[i] = in[(i + half) % n];
    return out;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace cran::fft
