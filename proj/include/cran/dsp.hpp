#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cran/types.hpp"

namespace cran::dsp {

// Modified Bessel function of the first kind, order zero (for Kaiser
// windows). Power series, accurate to double precision for |x| < 700.
double bessel_i0(double x);

// Kaiser window of given length and shape parameter beta.
std::vector<double> kaiser_window(std::size_t n, double beta);

// Root-raised-cosine pulse, unit energy, odd length span*sps + 1,
// centered at index span*sps/2. rolloff in (0, 1].
std::vector<double> rrc_taps(double rolloff, int sps, int span_symbols);

// Lowpass FIR via windowed sinc. cutoff is the 6 dB point as a
// fraction of the sample rate (0 < cutoff < 0.5). DC gain is `gain`.
std::vector<double> kaiser_lowpass(std::size_t n_taps, double cutoff, double beta,
                                   double gain = 1.0);

// Interpolates a complex sequence at arbitrary fractional positions
// with a Kaiser-windowed sinc kernel (64 taps, beta 12; image/alias
// floor below -100 dB for content under ~0.8 Nyquist). Positions
// outside the sequence read zeros. The kernel is tabulated once per
// process; lookups interpolate linearly between tabulated phases.
class SincInterpolator {
  public:
    static constexpr int kHalfTaps = 32;  // kernel support: [-32, 32)

    // Value of the underlying continuous-time reconstruction of x at
    // fractional sample position pos.
    static cplx at(std::span<const cplx> x, double pos);
    static double kernel(double u);  // tabulated kernel value at offset u
};

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no
// final xor.
std::uint16_t crc16_ccitt(const std::uint8_t* data, std::size_t len);

// Least-squares line fit y ~ a + b*x. Returns {intercept, slope,
// residual variance (unbiased), slope variance}.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double resid_var = 0.0;
    double slope_var = 0.0;
    double intercept_var = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);
LineFit fit_line_weighted(std::span<const double> x, std::span<const double> y,
                          std::span<const double> w);

// Unwrap a phase sequence in place (removes 2*pi jumps).
void unwrap_inplace(std::vector<double>& phase);

// Offset of a parabola vertex fit through three equally spaced points
// (y at -1, 0, +1). Returns the sub-bin offset in [-0.5, 0.5], and 0
// when the points are degenerate.
double parabolic_peak_offset(double ym1, double y0, double yp1);

double db_to_lin(double db);
double lin_to_db(double lin);

double mean(std::span<const double> v);
double stddev(std::span<const double> v);  // unbiased (n-1)

}  // namespace cran::dsp
