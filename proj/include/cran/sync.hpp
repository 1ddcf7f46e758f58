#pragma once

#include <span>
#include <vector>

#include "cran/types.hpp"

namespace cran {

// Complex cross-correlation r[l] = sum_n conj(a[n]) * b[l+n] evaluated
// for lags l in [-max_lag, max_lag] (FFT based, zero padded, so the
// lags of interest are linear, not circular). peak_lag refines the
// integer peak with a parabolic fit of the magnitude; peak_value is
// normalized by the geometric mean energy, in [0, 1].
struct CcfResult {
    std::vector<double> mag;  // |r|, index i <-> lag i - max_lag
    int max_lag = 0;
    int peak_index = 0;       // integer lag of the magnitude peak
    double peak_lag = 0.0;    // refined fractional lag
    double peak_value = 0.0;  // normalized peak magnitude
};
CcfResult ccf(std::span<const cplx> a, std::span<const cplx> b, int max_lag);

struct SyncConfig {
    int blocks = 16;            // correlation blocks across the window
    double min_peak = 0.1;      // normalized CCF lock threshold
    double soo_carrier_hz = 178.352e6;  // carrier both streams were captured at
    double report_carrier_hz = 0.0;     // CFO referred to this carrier; 0 = soo carrier
    double path_delay_diff_s = 0.0;     // remote minus reference geometric delay
    int max_lag = 512;          // coarse search half-range, samples
};

// Remote-minus-reference clock state at t_mid. tau follows the remote
// clock's offset against the reference clock; a positive sco_ppm means
// the remote clock runs fast (its offset grows).
struct SyncEstimate {
    double tau_s = 0.0;
    double sigma_tau_s = 0.0;
    double cfo_hz = 0.0;
    double sigma_cfo_hz = 0.0;
    double sco_ppm = 0.0;
    double sigma_sco_ppm = 0.0;
    Timestamp t_mid;             // epoch the estimate refers to
    double block_peak_min = 0.0; // weakest per-block correlation peak
};

// Two-stage estimator on a pair of concurrently captured streams of
// the same broadcast signal: per block, an integer+parabolic CCF peak
// seeds a weighted cross-spectrum phase-slope fit (fractional delay
// and block phase); the per-block delays fit a line over time (offset
// at t_mid + sample clock drift) and the unwrapped block phases fit
// the frequency offset. Uncertainties come from the fit residuals.
// Throws NoLockError (weak correlation) and AmbiguityError (phase
// advances too fast per block to unwrap; use more, shorter blocks).
SyncEstimate estimate_sync(const BasebandSignal& reference, const BasebandSignal& remote,
                           const SyncConfig& cfg);

struct CorrectedToa {
    Timestamp toa;       // on the reference station's clock
    double sigma_s = 0.0;
};

// Maps a remote-station ToA onto the reference clock: subtracts tau
// plus the drift accumulated between t_mid and the ToA. Throws
// StaleEstimateError when the ToA lies more than validity_s from
// t_mid on either side.
CorrectedToa apply_correction(const Timestamp& toa, const SyncEstimate& est,
                              double validity_s);

// Lower bounds for the two-noisy-stream estimators above, used as
// oracles in tests. snr_linear is the per-bin SNR inside the occupied
// band; with noise on both streams the effective coherence SNR is
// snr^2/(1+2*snr), and each cross-spectrum bin phase then has variance
// 1/(2*snr_eff).
//
// Delay: weighting the phase slope across time_bandwidth occupied bins
// whose RMS frequency spread is beta_rms_hz gives
//   sigma_tau >= 1 / (2*pi*beta_rms*sqrt(2*snr_eff*time_bandwidth)).
double crlb_tau(double snr_linear, double beta_rms_hz, double time_bandwidth);

// Frequency: a phase slope over duration_s with n_samples occupied
// band samples spread uniformly in time gives
//   sigma_f >= sqrt(3) / (pi*duration*sqrt(2*snr_eff*n_samples)).
double crlb_cfo(double snr_linear, double duration_s, double n_samples);

}  // namespace cran
