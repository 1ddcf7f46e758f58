#include "cran/sync.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cran/dsp.hpp"
#include "cran/errors.hpp"
#include "cran/fft.hpp"

namespace cran {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

CcfResult ccf(std::span<const cplx> a, std::span<const cplx> b, int max_lag) {
    if (a.empty() || b.empty()) throw InvalidSpecError("ccf: empty input");
    if (max_lag < 1) throw InvalidSpecError("ccf: max_lag must be >= 1");
    const std::size_t n = std::min(a.size(), b.size());
    if (static_cast<std::size_t>(max_lag) >= n)
        throw InvalidSpecError("ccf: max_lag must be smaller than the block");

    const std::size_t m = fft::next_pow2(n + static_cast<std::size_t>(max_lag) + 1);
    std::vector<cplx> fa(m, cplx{0.0, 0.0}), fb(m, cplx{0.0, 0.0});
    std::copy(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n), fa.begin());
    std::copy(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n), fb.begin());
    fft::transform(fa, false);
    fft::transform(fb, false);
    for (std::size_t i = 0; i < m; ++i) fa[i] = std::conj(fa[i]) * fb[i];
    fft::transform(fa, true);  // fa[l] = sum_n conj(a[n]) b[n+l], circular in m

    double ea = 0.0, eb = 0.0;
    for (std::size_t i = 0; i < n; ++i) ea += std::norm(a[i]), eb += std::norm(b[i]);
    const double denom = std::sqrt(std::max(ea * eb, 1e-300));

    CcfResult r;
    r.max_lag = max_lag;
    r.mag.resize(2 * static_cast<std::size_t>(max_lag) + 1);
    for (int l = -max_lag; l <= max_lag; ++l) {
        std::size_t idx = l >= 0 ? static_cast<std::size_t>(l)
                                 : m - static_cast<std::size_t>(-l);
        r.mag[static_cast<std::size_t>(l + max_lag)] = std::abs(fa[idx]);
    }
    auto it = std::max_element(r.mag.begin(), r.mag.end());
    const int pi_idx = static_cast<int>(it - r.mag.begin());
    r.peak_index = pi_idx - max_lag;
    r.peak_value = *it / denom;
    const double ym1 = pi_idx > 0 ? r.mag[static_cast<std::size_t>(pi_idx - 1)] : *it;
    const double yp1 = pi_idx + 1 < static_cast<int>(r.mag.size())
                           ? r.mag[static_cast<std::size_t>(pi_idx + 1)]
                           : *it;
    r.peak_lag = static_cast<double>(r.peak_index) +
                 dsp::parabolic_peak_offset(ym1, *it, yp1);
    return r;
}

SyncEstimate estimate_sync(const BasebandSignal& reference, const BasebandSignal& remote,
                           const SyncConfig& cfg) {
    if (reference.empty() || remote.empty())
        throw InvalidSpecError("sync: empty input stream");
    if (reference.sample_rate != remote.sample_rate)
        throw InvalidSpecError("sync: sample rates differ");
    if (cfg.blocks < 4) throw InvalidSpecError("sync: need at least 4 blocks");
    const double rate = reference.sample_rate;
    const double ts = 1.0 / rate;
    const std::size_t n = std::min(reference.size(), remote.size());
    const std::size_t blk = n / static_cast<std::size_t>(cfg.blocks);
    if (blk < 4 * static_cast<std::size_t>(cfg.max_lag))
        throw InvalidSpecError("sync: blocks too short for the coarse search range");

    const int k_blocks = cfg.blocks;
    std::vector<double> t_rel(static_cast<std::size_t>(k_blocks));   // block centers, s
    std::vector<double> d_samps(static_cast<std::size_t>(k_blocks)); // per-block lag
    std::vector<double> phases(static_cast<std::size_t>(k_blocks));  // per-block phase
    double peak_min = 1.0;

    std::vector<cplx> fa(blk), fb(blk), rot(blk);
    // per-block lag + phase measurement; derot_hz counter-rotates the
    // remote stream first (stage two below)
    auto measure = [&](double derot_hz) {
        peak_min = 1.0;
        for (int k = 0; k < k_blocks; ++k) {
            const std::size_t off = static_cast<std::size_t>(k) * blk;
            std::span<const cplx> a(reference.samples.data() + off, blk);
            const cplx* b = remote.samples.data() + off;
            if (derot_hz == 0.0) {
                std::copy(b, b + blk, rot.begin());
            } else {
                const double w = -kTwoPi * derot_hz * ts;
                for (std::size_t i = 0; i < blk; ++i)
                    rot[i] = b[i] * std::polar(1.0, w * static_cast<double>(off + i));
            }

            CcfResult c = ccf(a, rot, cfg.max_lag);
            peak_min = std::min(peak_min, c.peak_value);
            if (c.peak_value < cfg.min_peak)
                throw NoLockError("sync: correlation peak " + std::to_string(c.peak_value) +
                                  " below lock threshold in block " + std::to_string(k));
            const int d0 = c.peak_index;

            // cross spectrum, coarse delay removed; the residual phase
            // ramp across the occupied band is well inside +-pi
            std::copy(a.begin(), a.end(), fa.begin());
            std::copy(rot.begin(), rot.end(), fb.begin());
            fft::transform(fa, false);
            fft::transform(fb, false);
            std::vector<double> xs, ys, ws;
            xs.reserve(blk);
            double peak_pw = 0.0;
            std::vector<cplx> cs(blk);
            for (std::size_t f = 0; f < blk; ++f) {
                const double fr = f < blk / 2 ? static_cast<double>(f)
                                              : static_cast<double>(f) - static_cast<double>(blk);
                cs[f] = std::conj(fa[f]) * fb[f] *
                        std::polar(1.0, kTwoPi * fr * static_cast<double>(d0) /
                                            static_cast<double>(blk));
                peak_pw = std::max(peak_pw, std::abs(cs[f]));
            }
            const double floor_mag = 0.1 * peak_pw;
            // bin phases are measured as deviations around the block's
            // bulk phase: raw arg() values straddle the +-pi cut whenever
            // the bulk phase lands near it, which corrupts the fit
            cplx bulk{0.0, 0.0};
            for (std::size_t f = 0; f < blk; ++f)
                if (std::abs(cs[f]) >= floor_mag) bulk += cs[f];
            const cplx debulk = std::polar(1.0, -std::arg(bulk));
            for (std::size_t f = 0; f < blk; ++f) {
                const double mag = std::abs(cs[f]);
                if (mag < floor_mag) continue;  // noise-only bins
                const double fr = f < blk / 2 ? static_cast<double>(f)
                                              : static_cast<double>(f) - static_cast<double>(blk);
                xs.push_back(kTwoPi * fr / static_cast<double>(blk));
                ys.push_back(std::arg(bulk) + std::arg(cs[f] * debulk));
                ws.push_back(mag * mag);
            }
            if (xs.size() < 8) throw NoLockError("sync: too few coherent bins in block");
            dsp::LineFit fit = dsp::fit_line_weighted(xs, ys, ws);
            // phase(f) = arg g - x_f * (d - d0)  =>  slope = -(d - d0)
            d_samps[static_cast<std::size_t>(k)] = static_cast<double>(d0) - fit.slope;
            phases[static_cast<std::size_t>(k)] = fit.intercept;
        }
    };

    for (int k = 0; k < k_blocks; ++k)
        t_rel[static_cast<std::size_t>(k)] =
            (static_cast<double>(k) * static_cast<double>(blk) +
             0.5 * static_cast<double>(blk)) * ts;
    const double t_mid_rel = dsp::mean(t_rel);
    for (double& t : t_rel) t -= t_mid_rel;

    measure(0.0);

    dsp::unwrap_inplace(phases);
    dsp::LineFit pfit1 = dsp::fit_line(t_rel, phases);
    const double cfo_coarse = pfit1.slope / kTwoPi;

    const double block_span_s = static_cast<double>(blk) * ts;
    if (std::abs(cfo_coarse) * block_span_s > 0.45)
        throw AmbiguityError("sync: frequency offset advances " +
                             std::to_string(std::abs(cfo_coarse) * block_span_s) +
                             " cycles per block; use more, shorter blocks");

    // stage two: a frequency offset couples into the measured delays
    // through the signal's own spectral phase slope, so remove the
    // coarse offset and measure again
    measure(cfo_coarse);

    // lag trend over time: intercept = lag at t_mid, slope = clock
    // rate difference
    std::vector<double> d_secs(d_samps.size());
    for (std::size_t k = 0; k < d_samps.size(); ++k) d_secs[k] = d_samps[k] * ts;
    dsp::LineFit dfit = dsp::fit_line(t_rel, d_secs);

    dsp::unwrap_inplace(phases);
    dsp::LineFit pfit2 = dsp::fit_line(t_rel, phases);
    const double cfo_bb = cfo_coarse + pfit2.slope / kTwoPi;

    SyncEstimate est;
    est.t_mid = reference.t0.advanced_seconds(t_mid_rel);
    const double t0_diff = remote.t0.diff_seconds(reference.t0);
    est.tau_s = dfit.intercept + t0_diff - cfg.path_delay_diff_s;
    est.sigma_tau_s = std::sqrt(std::max(dfit.intercept_var, 0.0));
    est.sco_ppm = dfit.slope * 1e6;
    est.sigma_sco_ppm = std::sqrt(std::max(dfit.slope_var, 0.0)) * 1e6;

    const double carrier =
        cfg.report_carrier_hz > 0.0 ? cfg.report_carrier_hz : cfg.soo_carrier_hz;
    if (cfg.soo_carrier_hz <= 0.0) throw InvalidSpecError("sync: soo carrier must be positive");
    const double scale = carrier / cfg.soo_carrier_hz;
    est.cfo_hz = cfo_bb * scale;
    est.sigma_cfo_hz = std::sqrt(std::max(pfit2.slope_var, 0.0)) / kTwoPi * scale;
    est.block_peak_min = peak_min;
    return est;
}

CorrectedToa apply_correction(const Timestamp& toa, const SyncEstimate& est,
                              double validity_s) {
    const double age = toa.diff_seconds(est.t_mid);
    if (std::abs(age) > validity_s)
        throw StaleEstimateError("sync: estimate is " + std::to_string(age) +
                                 " s away from the ToA, validity " +
                                 std::to_string(validity_s) + " s");
    CorrectedToa out;
    out.toa = toa.advanced_seconds(-(est.tau_s + est.sco_ppm * 1e-6 * age));
    out.sigma_s = est.sigma_tau_s;
    return out;
}

namespace {
double effective_snr(double snr_linear) {
    if (snr_linear <= 0.0) throw InvalidSpecError("crlb: snr must be positive");
    return snr_linear * snr_linear / (1.0 + 2.0 * snr_linear);
}
}  // namespace

double crlb_tau(double snr_linear, double beta_rms_hz, double time_bandwidth) {
    if (beta_rms_hz <= 0.0 || time_bandwidth <= 0.0)
        throw InvalidSpecError("crlb: bandwidth arguments must be positive");
    const double snr_eff = effective_snr(snr_linear);
    return 1.0 / (kTwoPi * beta_rms_hz * std::sqrt(2.0 * snr_eff * time_bandwidth));
}

double crlb_cfo(double snr_linear, double duration_s, double n_samples) {
    if (duration_s <= 0.0 || n_samples <= 0.0)
        throw InvalidSpecError("crlb: duration arguments must be positive");
    const double snr_eff = effective_snr(snr_linear);
    return std::sqrt(3.0) /
           (std::numbers::pi * duration_s * std::sqrt(2.0 * snr_eff * n_samples));
}

}  // namespace cran
