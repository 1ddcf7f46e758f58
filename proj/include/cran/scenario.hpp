#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cran/types.hpp"
#include "cran/waveforms.hpp"

namespace cran {

// One receiving base station. cfo_hz and sco_ppm describe the shared
// local oscillator and therefore apply identically to both channels.
// cfo_hz is quoted at the LPWAN emitter carrier; the channel model
// scales it to each channel's own carrier.
struct StationConfig {
    int id = 0;
    std::array<double, 3> position{0.0, 0.0, 0.0};  // m
    double clock_offset_s = 0.0;
    double cfo_hz = 0.0;
    double sco_ppm = 0.0;
    double noise_figure_db = 2.0;
    double rx_gain_db = 0.0;
};

struct EmitterConfig {
    std::array<double, 3> position{0.0, 0.0, 0.0};  // m
    double tx_power_dbm = 14.0;
    double carrier_hz = 868.3e6;
};

// Full simulation scenario. Channel semantics: channel 0 carries the
// LPWAN uplink, channel 1 the Signal-of-Opportunity broadcast.
struct ScenarioConfig {
    std::vector<StationConfig> stations;
    EmitterConfig lpwan_emitter;
    EmitterConfig soo_emitter;

    double es_n0_db = 24.0;     // per-sample SNR of each received stream
    bool noise_enabled = true;
    std::uint64_t seed = 1;
    double f_s = 2.0e6;         // ADC rate, Hz
    double duration_s = 1800.0; // schedule length
    double tx_interval_s = 90.0;
    double path_loss_exponent = 2.7;

    bool phase_noise = false;            // oscillator random-walk, default off
    double phase_noise_rad_per_sqrt_s = 0.0;
    bool multipath = false;              // reserved hook, must stay false

    // frontend / transport
    double f_res = kFres;
    int frontend_bits = 16;
    int fft_len = 16384;
    int n_subbands = 8;
    double ring_capacity_s = 120.0;
    bool compress_responses = true;
    int http_base_port = 18080;

    // waveforms (payload and per-epoch seeds are stamped by the runner)
    TelegramSpec telegram;
    SooSpec soo;
    int telegram_payload_len = 8;  // first 4 bytes carry the epoch counter

    // sync / positioning
    double sync_duration_s = 0.25;
    int sync_blocks = 16;
    double sync_validity_s = 60.0;
    int ref_station = -1;  // -1: first station
    bool enable_tdoa = true;
    bool solve_3d = false;

    int ref_station_id() const { return ref_station >= 0 ? ref_station : stations.front().id; }
    const StationConfig& station(int id) const;
    const EmitterConfig& emitter(int channel_id) const;
};

// JSON (de)serialization. Validation failures throw InvalidSpecError
// with a dotted field path, e.g. "stations[1].position".
ScenarioConfig load_scenario(const std::filesystem::path& json_path);
ScenarioConfig scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const ScenarioConfig& cfg);

// FNV-1a over the canonical (sorted-key) JSON dump, as a hex string.
std::string scenario_hash(const ScenarioConfig& cfg);

}  // namespace cran
