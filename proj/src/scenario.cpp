#include "cran/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "cran/errors.hpp"
#include "cran/rng.hpp"

namespace cran {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw InvalidSpecError("config: " + path + ": " + why);
}

double get_num(const json& j, const std::string& path, const char* key, double dflt,
               bool required = false) {
    if (!j.contains(key)) {
        if (required) fail(path + "." + key, "missing required field");
        return dflt;
    }
    const json& v = j.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected number");
    return v.get<double>();
}

std::int64_t get_int(const json& j, const std::string& path, const char* key,
                     std::int64_t dflt, bool required = false) {
    if (!j.contains(key)) {
        if (required) fail(path + "." + key, "missing required field");
        return dflt;
    }
    const json& v = j.at(key);
    if (!v.is_number_integer()) fail(path + "." + key, "expected integer");
    return v.get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool dflt) {
    if (!j.contains(key)) return dflt;
    const json& v = j.at(key);
    if (!v.is_boolean()) fail(path + "." + key, "expected boolean");
    return v.get<bool>();
}

std::array<double, 3> get_position(const json& j, const std::string& path) {
    if (!j.contains("position_m")) fail(path + ".position_m", "missing required field");
    const json& v = j.at("position_m");
    if (!v.is_array() || v.size() < 2 || v.size() > 3)
        fail(path + ".position_m", "expected array of 2 or 3 numbers");
    std::array<double, 3> p{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(path + ".position_m", "expected array of numbers");
        p[i] = v[i].get<double>();
    }
    return p;
}

EmitterConfig parse_emitter(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected object");
    EmitterConfig e;
    e.position = get_position(j, path);
    e.tx_power_dbm = get_num(j, path, "tx_power_dbm", e.tx_power_dbm);
    e.carrier_hz = get_num(j, path, "carrier_hz", e.carrier_hz, true);
    if (e.carrier_hz <= 0.0) fail(path + ".carrier_hz", "must be positive");
    return e;
}

}  // namespace

ScenarioConfig scenario_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidSpecError(std::string("config: JSON parse error: ") + e.what());
    }
    if (!j.is_object()) throw InvalidSpecError("config: top level must be an object");

    ScenarioConfig sc;
    sc.seed = static_cast<std::uint64_t>(get_int(j, "", "seed", 1));
    sc.f_s = get_num(j, "", "f_s_hz", sc.f_s);
    sc.f_res = get_num(j, "", "f_res_hz", sc.f_res);
    sc.duration_s = get_num(j, "", "duration_s", sc.duration_s);
    sc.tx_interval_s = get_num(j, "", "tx_interval_s", sc.tx_interval_s);
    sc.es_n0_db = get_num(j, "", "es_n0_db", sc.es_n0_db);
    sc.noise_enabled = get_bool(j, "", "noise_enabled", sc.noise_enabled);
    sc.path_loss_exponent = get_num(j, "", "path_loss_exponent", sc.path_loss_exponent);
    sc.phase_noise = get_bool(j, "", "phase_noise", sc.phase_noise);
    sc.phase_noise_rad_per_sqrt_s =
        get_num(j, "", "phase_noise_rad_per_sqrt_s", sc.phase_noise_rad_per_sqrt_s);
    sc.multipath = get_bool(j, "", "multipath", sc.multipath);
    sc.frontend_bits = static_cast<int>(get_int(j, "", "frontend_bits", sc.frontend_bits));
    sc.fft_len = static_cast<int>(get_int(j, "", "fft_len", sc.fft_len));
    sc.n_subbands = static_cast<int>(get_int(j, "", "n_subbands", sc.n_subbands));
    sc.ring_capacity_s = get_num(j, "", "ring_capacity_s", sc.ring_capacity_s);
    sc.compress_responses = get_bool(j, "", "compress_responses", sc.compress_responses);
    sc.http_base_port = static_cast<int>(get_int(j, "", "http_base_port", sc.http_base_port));

    if (!j.contains("stations") || !j.at("stations").is_array() || j.at("stations").empty())
        fail("stations", "expected non-empty array");
    int idx = 0;
    for (const json& sj : j.at("stations")) {
        std::string path = "stations[" + std::to_string(idx) + "]";
        if (!sj.is_object()) fail(path, "expected object");
        StationConfig st;
        st.id = static_cast<int>(get_int(sj, path, "id", idx));
        st.position = get_position(sj, path);
        st.clock_offset_s = get_num(sj, path, "clock_offset_s", 0.0);
        st.cfo_hz = get_num(sj, path, "cfo_hz", 0.0);
        st.sco_ppm = get_num(sj, path, "sco_ppm", 0.0);
        st.noise_figure_db = get_num(sj, path, "noise_figure_db", 2.0);
        st.rx_gain_db = get_num(sj, path, "rx_gain_db", 0.0);
        sc.stations.push_back(st);
        ++idx;
    }

    if (!j.contains("lpwan_emitter")) fail("lpwan_emitter", "missing required field");
    sc.lpwan_emitter = parse_emitter(j.at("lpwan_emitter"), "lpwan_emitter");
    if (!j.contains("soo_emitter")) fail("soo_emitter", "missing required field");
    sc.soo_emitter = parse_emitter(j.at("soo_emitter"), "soo_emitter");

    if (j.contains("telegram")) {
        const json& t = j.at("telegram");
        if (!t.is_object()) fail("telegram", "expected object");
        sc.telegram.n_bursts = static_cast<int>(get_int(t, "telegram", "n_bursts", 24));
        sc.telegram.burst_len = static_cast<int>(get_int(t, "telegram", "burst_len", 16384));
        sc.telegram.symbol_rate = get_num(t, "telegram", "symbol_rate_hz", 3906.25);
        sc.telegram.rolloff = get_num(t, "telegram", "rolloff", 0.25);
        sc.telegram.pulse_span =
            static_cast<int>(get_int(t, "telegram", "pulse_span", 8));
        sc.telegram.time_span_factor = get_num(t, "telegram", "time_span_factor", 1.5);
        sc.telegram_payload_len =
            static_cast<int>(get_int(t, "telegram", "payload_len", sc.telegram_payload_len));
        if (t.contains("freq_slots_hz")) {
            const json& fsj = t.at("freq_slots_hz");
            if (fsj.is_array()) {
                sc.telegram.freq_slots.clear();
                for (const json& f : fsj) {
                    if (!f.is_number()) fail("telegram.freq_slots_hz", "expected numbers");
                    sc.telegram.freq_slots.push_back(f.get<double>());
                }
            } else if (fsj.is_object()) {
                int count = static_cast<int>(
                    get_int(fsj, "telegram.freq_slots_hz", "count", 48, true));
                double span =
                    get_num(fsj, "telegram.freq_slots_hz", "span_hz", 1.4e6, true);
                if (count < 1) fail("telegram.freq_slots_hz.count", "must be >= 1");
                sc.telegram.freq_slots.clear();
                for (int i = 0; i < count; ++i)
                    sc.telegram.freq_slots.push_back(
                        count == 1 ? 0.0 : -span / 2.0 + span * i / (count - 1.0));
            } else {
                fail("telegram.freq_slots_hz", "expected array or {count, span_hz}");
            }
        }
    }
    sc.telegram.sample_rate = sc.f_s;
    if (sc.telegram.freq_slots.empty())
        sc.telegram.freq_slots = TelegramSpec::default_freq_slots();

    if (j.contains("soo")) {
        const json& s = j.at("soo");
        if (!s.is_object()) fail("soo", "expected object");
        sc.soo.n_fft = static_cast<int>(get_int(s, "soo", "n_fft", 2048));
        sc.soo.cp_len = static_cast<int>(get_int(s, "soo", "cp_len", sc.soo.n_fft / 8));
        sc.soo.n_active_carriers =
            static_cast<int>(get_int(s, "soo", "n_active_carriers", 1500));
    }
    sc.soo.sample_rate = sc.f_s;

    if (j.contains("sync")) {
        const json& s = j.at("sync");
        if (!s.is_object()) fail("sync", "expected object");
        sc.sync_duration_s = get_num(s, "sync", "duration_s", sc.sync_duration_s);
        sc.sync_blocks = static_cast<int>(get_int(s, "sync", "blocks", sc.sync_blocks));
        sc.sync_validity_s = get_num(s, "sync", "validity_s", sc.sync_validity_s);
        sc.ref_station = static_cast<int>(get_int(s, "sync", "ref_station", -1));
    }
    if (j.contains("tdoa")) {
        const json& t = j.at("tdoa");
        if (!t.is_object()) fail("tdoa", "expected object");
        sc.enable_tdoa = get_bool(t, "tdoa", "enabled", sc.enable_tdoa);
        sc.solve_3d = get_bool(t, "tdoa", "solve_3d", sc.solve_3d);
    }

    // cross-field validation
    if (sc.f_s <= 0.0) fail("f_s_hz", "must be positive");
    if (sc.f_res <= 0.0) fail("f_res_hz", "must be positive");
    double ratio = sc.f_res / sc.f_s;
    if (ratio < 0.5 || ratio > 2.0) fail("f_res_hz", "resample ratio must lie in [0.5, 2]");
    if (sc.tx_interval_s <= 0.0) fail("tx_interval_s", "must be positive");
    if (sc.duration_s < 0.0) fail("duration_s", "must be non-negative");
    if (sc.frontend_bits != 8 && sc.frontend_bits != 16)
        fail("frontend_bits", "must be 8 or 16");
    if (sc.fft_len < 2 || (sc.fft_len & (sc.fft_len - 1)) != 0)
        fail("fft_len", "must be a power of two");
    if (sc.n_subbands < 1 || sc.fft_len % sc.n_subbands != 0)
        fail("n_subbands", "must divide fft_len");
    if (sc.ring_capacity_s <= 0.0) fail("ring_capacity_s", "must be positive");
    if (sc.telegram_payload_len < 5 || sc.telegram_payload_len > 255)
        fail("telegram.payload_len", "must be in [5, 255] (first 4 bytes carry the counter)");
    if (sc.sync_blocks < 4) fail("sync.blocks", "must be >= 4");
    if (sc.sync_duration_s <= 0.0) fail("sync.duration_s", "must be positive");

    std::vector<int> ids;
    for (const auto& st : sc.stations) ids.push_back(st.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        fail("stations", "station ids must be unique");
    if (sc.stations.size() < 2) fail("stations", "need >= 2 stations for synchronization");
    if (sc.enable_tdoa) {
        std::size_t need = sc.solve_3d ? 4 : 3;
        if (sc.stations.size() < need)
            fail("stations", "need >= " + std::to_string(need) + " stations for " +
                                 (sc.solve_3d ? "3D" : "2D") + " TDoA (or disable tdoa)");
    }
    if (sc.ref_station >= 0) sc.station(sc.ref_station);  // must exist
    return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw InvalidSpecError("config: cannot open " + json_path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return scenario_from_json_text(text);
}

std::string scenario_to_json_text(const ScenarioConfig& sc) {
    json j;
    j["seed"] = sc.seed;
    j["f_s_hz"] = sc.f_s;
    j["f_res_hz"] = sc.f_res;
    j["duration_s"] = sc.duration_s;
    j["tx_interval_s"] = sc.tx_interval_s;
    j["es_n0_db"] = sc.es_n0_db;
    j["noise_enabled"] = sc.noise_enabled;
    j["path_loss_exponent"] = sc.path_loss_exponent;
    j["phase_noise"] = sc.phase_noise;
    j["phase_noise_rad_per_sqrt_s"] = sc.phase_noise_rad_per_sqrt_s;
    j["multipath"] = sc.multipath;
    j["frontend_bits"] = sc.frontend_bits;
    j["fft_len"] = sc.fft_len;
    j["n_subbands"] = sc.n_subbands;
    j["ring_capacity_s"] = sc.ring_capacity_s;
    j["compress_responses"] = sc.compress_responses;
    j["http_base_port"] = sc.http_base_port;
    for (const auto& st : sc.stations) {
        json sj;
        sj["id"] = st.id;
        sj["position_m"] = {st.position[0], st.position[1], st.position[2]};
        sj["clock_offset_s"] = st.clock_offset_s;
        sj["cfo_hz"] = st.cfo_hz;
        sj["sco_ppm"] = st.sco_ppm;
        sj["noise_figure_db"] = st.noise_figure_db;
        sj["rx_gain_db"] = st.rx_gain_db;
        j["stations"].push_back(sj);
    }
    auto emit = [](const EmitterConfig& e) {
        json ej;
        ej["position_m"] = {e.position[0], e.position[1], e.position[2]};
        ej["tx_power_dbm"] = e.tx_power_dbm;
        ej["carrier_hz"] = e.carrier_hz;
        return ej;
    };
    j["lpwan_emitter"] = emit(sc.lpwan_emitter);
    j["soo_emitter"] = emit(sc.soo_emitter);
    j["telegram"] = {{"n_bursts", sc.telegram.n_bursts},
                     {"burst_len", sc.telegram.burst_len},
                     {"symbol_rate_hz", sc.telegram.symbol_rate},
                     {"rolloff", sc.telegram.rolloff},
                     {"pulse_span", sc.telegram.pulse_span},
                     {"time_span_factor", sc.telegram.time_span_factor},
                     {"payload_len", sc.telegram_payload_len},
                     {"freq_slots_hz", sc.telegram.freq_slots}};
    j["soo"] = {{"n_fft", sc.soo.n_fft},
                {"cp_len", sc.soo.cp_len},
                {"n_active_carriers", sc.soo.n_active_carriers}};
    j["sync"] = {{"duration_s", sc.sync_duration_s},
                 {"blocks", sc.sync_blocks},
                 {"validity_s", sc.sync_validity_s},
                 {"ref_station", sc.ref_station}};
    j["tdoa"] = {{"enabled", sc.enable_tdoa}, {"solve_3d", sc.solve_3d}};
    return j.dump(2);
}

std::string scenario_hash(const ScenarioConfig& cfg) {
    std::string canon = scenario_to_json_text(cfg);
    std::uint64_t h = rng::hash_name(canon);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace cran
