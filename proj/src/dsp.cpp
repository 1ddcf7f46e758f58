#include "cran/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cran/errors.hpp"

namespace cran::dsp {

namespace {
constexpr double kPi = std::numbers::pi;

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    double px = kPi * x;
    return std::sin(px) / px;
}
}  // namespace

double bessel_i0(double x) {
    // Series sum_k (x/2)^{2k} / (k!)^2, converges fast for our range.
    double ax = std::abs(x);
    double term = 1.0, sum = 1.0;
    double half2 = 0.25 * ax * ax;
    for (int k = 1; k < 60; ++k) {
        term *= half2 / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-18) break;
    }
    return sum;
}

std::vector<double> kaiser_window(std::size_t n, double beta) {
    std::vector<double> w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    const double denom = bessel_i0(beta);
    const double m = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        double r = 2.0 * static_cast<double>(i) / m - 1.0;  // [-1, 1]
        w[i] = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    }
    return w;
}

std::vector<double> rrc_taps(double rolloff, int sps, int span_symbols) {
    if (rolloff <= 0.0 || rolloff > 1.0) throw InvalidSpecError("rrc rolloff out of (0,1]");
    if (sps < 1 || span_symbols < 1) throw InvalidSpecError("rrc sps/span must be positive");
    const int n = span_symbols * sps + 1;
    const int mid = span_symbols * sps / 2;
    std::vector<double> h(static_cast<std::size_t>(n));
    const double b = rolloff;
    for (int i = 0; i < n; ++i) {
        double t = static_cast<double>(i - mid) / sps;  // in symbols
        double v;
        if (std::abs(t) < 1e-9) {
            v = 1.0 - b + 4.0 * b / kPi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
            v = (b / std::sqrt(2.0)) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) +
                 (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
        } else {
            double num = std::sin(kPi * t * (1.0 - b)) +
                         4.0 * b * t * std::cos(kPi * t * (1.0 + b));
            double den = kPi * t * (1.0 - 16.0 * b * b * t * t);
            v = num / den;
        }
        h[static_cast<std::size_t>(i)] = v;
    }
    double energy = 0.0;
    for (double v : h) energy += v * v;
    double norm = 1.0 / std::sqrt(energy);
    for (double& v : h) v *= norm;
    return h;
}

std::vector<double> kaiser_lowpass(std::size_t n_taps, double cutoff, double beta,
                                   double gain) {
    if (cutoff <= 0.0 || cutoff >= 0.5) throw InvalidSpecError("lowpass cutoff out of (0,0.5)");
    if (n_taps < 3) throw InvalidSpecError("lowpass needs at least 3 taps");
    std::vector<double> w = kaiser_window(n_taps, beta);
    std::vector<double> h(n_taps);
    const double mid = 0.5 * static_cast<double>(n_taps - 1);
    double dc = 0.0;
    for (std::size_t i = 0; i < n_taps; ++i) {
        double t = static_cast<double>(i) - mid;
        h[i] = 2.0 * cutoff * sinc(2.0 * cutoff * t) * w[i];
        dc += h[i];
    }
    double norm = gain / dc;
    for (double& v : h) v *= norm;
    return h;
}

namespace {

// Tabulated Kaiser-sinc interpolation kernel. 8192 phases across one
// sample interval keep the linear-interpolation error of the table far
// below the kernel's own alias floor.
constexpr int kPhases = 8192;
constexpr double kKernelBeta = 12.0;

struct KernelTable {
    // value[(k + kHalfTaps) * (kPhases + 1) + p] = g(k + p/kPhases)
    std::vector<double> value;
    KernelTable() {
        const int half = SincInterpolator::kHalfTaps;
        const double denom = bessel_i0(kKernelBeta);
        value.resize(static_cast<std::size_t>(2 * half) * (kPhases + 1));
        for (int k = -half; k < half; ++k) {
            for (int p = 0; p <= kPhases; ++p) {
                double u = static_cast<double>(k) + static_cast<double>(p) / kPhases;
                double r = u / half;
                double win = (std::abs(r) <= 1.0)
                                 ? bessel_i0(kKernelBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom
                                 : 0.0;
                value[static_cast<std::size_t>(k + half) * (kPhases + 1) +
                      static_cast<std::size_t>(p)] = sinc(u) * win;
            }
        }
    }
};

const KernelTable& kernel_table() {
    static const KernelTable t;
    return t;
}

}  // namespace

double SincInterpolator::kernel(double u) {
    const int half = kHalfTaps;
    if (u < -half || u >= half) return 0.0;
    const auto& tab = kernel_table();
    double idx = (u + half) * kPhases;
    double fl = std::floor(idx);
    std::size_t base = static_cast<std::size_t>(fl);
    double frac = idx - fl;
    // rows are laid out with kPhases+1 entries so base+1 never crosses
    // into the next tap's row with a wrong phase
    std::size_t k = base / kPhases;
    std::size_t p = base % kPhases;
    std::size_t off = k * (kPhases + 1) + p;
    return tab.value[off] * (1.0 - frac) + tab.value[off + 1] * frac;
}

cplx SincInterpolator::at(std::span<const cplx> x, double pos) {
    const int half = kHalfTaps;
    const double fl = std::floor(pos);
    const double mu = pos - fl;
    const std::int64_t n0 = static_cast<std::int64_t>(fl);
    const auto& tab = kernel_table();

    // Walk taps m = n0-half+1 .. n0+half; the kernel argument
    // u = pos - m runs from (mu+half-1) down to (mu-half) in unit
    // steps, so the table index (u+half)*kPhases decreases by exactly
    // kPhases per tap.
    double acc_re = 0.0, acc_im = 0.0;
    double fidx = (mu + 2.0 * half - 1.0) * kPhases;
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    for (int t = 0; t < 2 * half; ++t, fidx -= kPhases) {
        std::int64_t m = n0 - half + 1 + t;
        if (m < 0 || m >= n) continue;
        double fl_i = std::floor(fidx);
        std::size_t base = static_cast<std::size_t>(fl_i);
        double frac = fidx - fl_i;
        std::size_t k = base / kPhases;
        std::size_t p = base % kPhases;
        std::size_t off = k * (kPhases + 1) + p;
        double g = tab.value[off] * (1.0 - frac) + tab.value[off + 1] * frac;
        acc_re += g * x[static_cast<std::size_t>(m)].real();
        acc_im += g * x[static_cast<std::size_t>(m)].imag();
    }
    return {acc_re, acc_im};
}

std::uint16_t crc16_ccitt(const std::uint8_t* data, std::size_t len) {
    std::uint16_t crc = 0xFFFF;
    for (std::size_t i = 0; i < len; ++i) {
        crc ^= static_cast<std::uint16_t>(data[i]) << 8;
        for (int b = 0; b < 8; ++b) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                                 : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    std::vector<double> w(x.size(), 1.0);
    return fit_line_weighted(x, y, w);
}

LineFit fit_line_weighted(std::span<const double> x, std::span<const double> y,
                          std::span<const double> w) {
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
        throw InvalidSpecError("fit_line: bad input sizes");
    const std::size_t n = x.size();
    double sw = 0.0, swx = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
    }
    const double xbar = swx / sw, ybar = swy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - xbar;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (y[i] - ybar);
    }
    LineFit f;
    if (sxx <= 0.0) throw InvalidSpecError("fit_line: degenerate abscissae");
    f.slope = sxy / sxx;
    f.intercept = ybar - f.slope * xbar;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (f.intercept + f.slope * x[i]);
        ss += w[i] * r * r;
    }
    // Residual variance per unit weight; with unit weights this is the
    // familiar unbiased estimate.
    double dof = static_cast<double>(n) - 2.0;
    f.resid_var = dof > 0.0 ? ss / dof : 0.0;
    f.slope_var = f.resid_var / sxx;
    f.intercept_var = f.resid_var * (1.0 / sw + xbar * xbar / sxx);
    return f;
}

void unwrap_inplace(std::vector<double>& phase) {
    double offset = 0.0;
    for (std::size_t i = 1; i < phase.size(); ++i) {
        double prev = phase[i - 1] + 0.0;  // already adjusted in place
        double d = (phase[i] + offset) - prev;
        while (d > kPi) {
            offset -= 2.0 * kPi;
            d -= 2.0 * kPi;
        }
        while (d < -kPi) {
            offset += 2.0 * kPi;
            d += 2.0 * kPi;
        }
        phase[i] += offset;
    }
}

double parabolic_peak_offset(double ym1, double y0, double yp1) {
    double denom = ym1 - 2.0 * y0 + yp1;
    if (std::abs(denom) < 1e-300) return 0.0;
    double off = 0.5 * (ym1 - yp1) / denom;
    return std::clamp(off, -0.5, 0.5);
}

double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace cran::dsp
