#pragma once

#include <complex>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cran {

using cplx = std::complex<double>;

// Exact speed of light, m/s.
inline constexpr double kSpeedOfLight = 299792458.0;

// Common resampled rate of the station frontends, Hz (2^21).
inline constexpr double kFres = 2097152.0;

// Epoch timestamp carried as integer nanoseconds plus a fractional
// nanosecond remainder in [0, 1). Keeps sample-grid times exact at the
// picosecond level over hour-scale runs.
struct Timestamp {
    std::int64_t ns = 0;
    double frac_ns = 0.0;

    static Timestamp from_seconds(double s) {
        Timestamp t;
        double total = s * 1e9;
        t.ns = static_cast<std::int64_t>(std::floor(total));
        t.frac_ns = total - static_cast<double>(t.ns);
        t.normalize();
        return t;
    }

    double seconds() const { return (static_cast<double>(ns) + frac_ns) * 1e-9; }

    void normalize() {
        double shift = std::floor(frac_ns);
        if (shift != 0.0) {
            ns += static_cast<std::int64_t>(shift);
            frac_ns -= shift;
        }
        if (frac_ns < 0.0) {  // guard against -0.0 / rounding residue
            frac_ns = 0.0;
        }
    }

    // Advance by delta nanoseconds (may be fractional or negative).
    Timestamp advanced_ns(double delta_ns) const {
        Timestamp t;
        double whole = std::floor(delta_ns);
        t.ns = ns + static_cast<std::int64_t>(whole);
        t.frac_ns = frac_ns + (delta_ns - whole);
        t.normalize();
        return t;
    }

    Timestamp advanced_samples(std::int64_t n, double sample_rate) const {
        return advanced_ns(static_cast<double>(n) * (1e9 / sample_rate));
    }

    Timestamp advanced_seconds(double s) const { return advanced_ns(s * 1e9); }

    // (this - other) in seconds; exact for spans where the integer parts
    // differ by less than ~2^53 ns.
    double diff_seconds(const Timestamp& other) const {
        return (static_cast<double>(ns - other.ns) + (frac_ns - other.frac_ns)) * 1e-9;
    }

    bool operator<(const Timestamp& o) const {
        return ns != o.ns ? ns < o.ns : frac_ns < o.frac_ns;
    }
    bool operator==(const Timestamp& o) const { return ns == o.ns && frac_ns == o.frac_ns; }
};

// Timestamped block of complex baseband samples.
struct BasebandSignal {
    std::vector<cplx> samples;
    double sample_rate = 0.0;  // Hz
    Timestamp t0;              // epoch of samples[0]

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double duration() const {
        return sample_rate > 0.0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
    Timestamp time_of_sample(std::int64_t n) const {
        return t0.advanced_samples(n, sample_rate);
    }
    Timestamp end_time() const { return time_of_sample(static_cast<std::int64_t>(samples.size())); }

    double mean_power() const {
        if (samples.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& s : samples) acc += std::norm(s);
        return acc / static_cast<double>(samples.size());
    }
};

}  // namespace cran
