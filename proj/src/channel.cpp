#include "cran/channel.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "cran/dsp.hpp"
#include "cran/errors.hpp"
#include "cran/rng.hpp"

namespace cran {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double euclidean_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double geometric_delay(const std::array<double, 3>& emitter_pos,
                       const std::array<double, 3>& station_pos) {
    return euclidean_distance(emitter_pos, station_pos) / kSpeedOfLight;
}

double rssi_model(double tx_power_dbm, double distance_m, double carrier_hz,
                  double exponent) {
    if (distance_m <= 0.0) throw InvalidSpecError("rssi_model: distance must be positive");
    if (carrier_hz <= 0.0) throw InvalidSpecError("rssi_model: carrier must be positive");
    // free-space loss at the 1 m reference distance
    double fspl_1m = 20.0 * std::log10(4.0 * std::numbers::pi * carrier_hz / kSpeedOfLight);
    return tx_power_dbm - (fspl_1m + 10.0 * exponent * std::log10(distance_m));
}

const StationConfig& ScenarioConfig::station(int id) const {
    for (const auto& st : stations)
        if (st.id == id) return st;
    throw InvalidSpecError("scenario: unknown station id " + std::to_string(id));
}

const EmitterConfig& ScenarioConfig::emitter(int channel_id) const {
    if (channel_id == 0) return lpwan_emitter;
    if (channel_id == 1) return soo_emitter;
    throw InvalidSpecError("scenario: channel_id must be 0 or 1");
}

AppliedImpairments applied_impairments(const ScenarioConfig& sc, int station_id,
                                       int channel_id) {
    const StationConfig& st = sc.station(station_id);
    const EmitterConfig& em = sc.emitter(channel_id);

    AppliedImpairments ai;
    // one LO serves both channels: the fractional error is shared and
    // the per-channel rotation scales with that channel's carrier
    ai.delta_rel = st.cfo_hz / sc.lpwan_emitter.carrier_hz;
    ai.cfo_bb_hz = ai.delta_rel * em.carrier_hz;
    ai.sco_ppm = st.sco_ppm;
    ai.clock_offset_s = st.clock_offset_s;
    ai.path_delay_s = geometric_delay(em.position, st.position);

    double dist = euclidean_distance(em.position, st.position);
    ai.rssi_dbm = rssi_model(em.tx_power_dbm, dist, em.carrier_hz, sc.path_loss_exponent);
    double rx_gain = std::pow(10.0, st.rx_gain_db / 20.0);
    ai.amplitude = std::pow(10.0, ai.rssi_dbm / 20.0) * rx_gain;

    if (sc.noise_enabled) {
        // noise figure above the 2 dB reference degrades the stream SNR
        double snr_db = sc.es_n0_db - (st.noise_figure_db - 2.0);
        ai.noise_sigma = ai.amplitude / std::sqrt(dsp::db_to_lin(snr_db));
    }
    return ai;
}

BasebandSignal capture_window(const BasebandSignal& tx, const ScenarioConfig& sc,
                              int station_id, int channel_id, Timestamp win_t0,
                              std::size_t n_samples) {
    if (tx.sample_rate != sc.f_s)
        throw InvalidSpecError("propagate: signal sample rate does not match scenario f_s");
    if (tx.empty()) throw InvalidSpecError("propagate: empty input signal");

    const AppliedImpairments ai = applied_impairments(sc, station_id, channel_id);
    const double fs = sc.f_s;
    const double ts = 1.0 / fs;
    const double s_rel = ai.sco_ppm * 1e-6;
    const double inv_rate = 1.0 / (1.0 + s_rel);

    // label time t maps to true time (t - offset)/(1 + s); keep all
    // per-sample arithmetic relative to the source start for precision
    const double src_t0 = tx.t0.seconds();
    const double base = win_t0.diff_seconds(tx.t0);       // label offset of output sample 0
    const double c0 = ai.clock_offset_s + s_rel * src_t0; // absolute clock error at src start
    const double w_cfo = kTwoPi * ai.cfo_bb_hz;
    const double phi0 = w_cfo * src_t0;

    std::mt19937_64 noise_rng =
        rng::stream(sc.seed, "noise", static_cast<std::uint64_t>(station_id),
                    static_cast<std::uint64_t>(channel_id),
                    static_cast<std::uint64_t>(win_t0.ns));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::normal_distribution<double> gauss_lo(0.0, 1.0);  // keep caches separate
    const double nsig = ai.noise_sigma / std::sqrt(2.0);  // per I/Q component

    std::mt19937_64 lo_rng =
        rng::stream(sc.seed, "lo-walk", static_cast<std::uint64_t>(station_id),
                    static_cast<std::uint64_t>(win_t0.ns));
    const double pn_step = sc.phase_noise
                               ? sc.phase_noise_rad_per_sqrt_s / std::sqrt(fs)
                               : 0.0;
    double pn_phase = 0.0;

    BasebandSignal out;
    out.sample_rate = fs;
    out.t0 = win_t0;
    out.samples.resize(n_samples);
    std::span<const cplx> src(tx.samples);
    for (std::size_t n = 0; n < n_samples; ++n) {
        double label = base + static_cast<double>(n) * ts;
        double t_true_rel = (label - c0) * inv_rate;  // true time since src start
        double pos = (t_true_rel - ai.path_delay_s) * fs;
        cplx v = dsp::SincInterpolator::at(src, pos);
        double phase = phi0 + w_cfo * t_true_rel;
        if (pn_step != 0.0) {
            pn_phase += pn_step * gauss_lo(lo_rng);
            phase += pn_phase;
        }
        v *= std::polar(ai.amplitude, phase);
        if (ai.noise_sigma > 0.0) {
            v += cplx{nsig * gauss(noise_rng), nsig * gauss(noise_rng)};
        }
        out.samples[n] = v;
    }
    return out;
}

BasebandSignal propagate(const BasebandSignal& tx, const ScenarioConfig& sc,
                         int station_id, int channel_id) {
    return capture_window(tx, sc, station_id, channel_id, tx.t0, tx.samples.size());
}

}  // namespace cran
