#pragma once

#include "cran/scenario.hpp"
#include "cran/types.hpp"

namespace cran {

// Euclidean distance / c.
double geometric_delay(const std::array<double, 3>& emitter_pos,
                       const std::array<double, 3>& station_pos);

double euclidean_distance(const std::array<double, 3>& a, const std::array<double, 3>& b);

// Log-distance path loss: RSSI = tx_power - (FSPL(1 m) + 10 n log10(d)).
double rssi_model(double tx_power_dbm, double distance_m, double carrier_hz,
                  double exponent = 2.7);

// Oscillator/clock parameters the channel applies for one station.
// Identical for both channels of a station by construction (LO
// sharing); exposed so tests can assert that.
struct AppliedImpairments {
    double delta_rel = 0.0;      // fractional LO error (cfo / lpwan carrier)
    double cfo_bb_hz = 0.0;      // rotation at this channel's carrier
    double sco_ppm = 0.0;
    double clock_offset_s = 0.0;
    double rssi_dbm = 0.0;
    double amplitude = 0.0;      // sqrt(mW)
    double noise_sigma = 0.0;    // per complex sample, post rx gain
    double path_delay_s = 0.0;
};
AppliedImpairments applied_impairments(const ScenarioConfig& sc, int station_id,
                                       int channel_id);

// Received stream of station `station_id`, channel `channel_id`,
// evaluated on the station's own label-time sample grid starting at
// win_t0 (n_samples at scenario f_s). The station clock maps label
// time t to true time (t - clock_offset)/(1 + sco_ppm*1e-6); content
// is the transmit signal delayed by the geometric path, scaled per
// rssi_model, rotated by the channel CFO, plus AWGN at Es/N0.
BasebandSignal capture_window(const BasebandSignal& tx, const ScenarioConfig& sc,
                              int station_id, int channel_id, Timestamp win_t0,
                              std::size_t n_samples);

// Spec-shaped wrapper: output on the same grid as the input signal.
BasebandSignal propagate(const BasebandSignal& tx, const ScenarioConfig& sc,
                         int station_id, int channel_id);

}  // namespace cran
