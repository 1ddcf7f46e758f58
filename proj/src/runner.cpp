#include "cran/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <random>

#include <json.hpp>

#include "cran/channel.hpp"
#include "cran/decoder.hpp"
#include "cran/dsp.hpp"
#include "cran/errors.hpp"
#include "cran/frontend.hpp"
#include "cran/rng.hpp"
#include "cran/sync.hpp"
#include "cran/tdoa.hpp"
#include "cran/transport.hpp"
#include "cran/waveforms.hpp"

namespace cran {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool log_enabled() {
    static const bool on = [] {
        const char* v = std::getenv("CRAN_LOG");
        return v != nullptr && *v != '\0';
    }();
    return on;
}

void logmsg(const std::string& s) {
    if (log_enabled()) std::fprintf(stderr, "[cran] %s\n", s.c_str());
}

std::string fmt(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

constexpr double kLeadS = 0.01;  // capture starts this far before the epoch

std::vector<std::uint8_t> epoch_payload(const ScenarioConfig& cfg, std::uint64_t k) {
    const int len = cfg.telegram_payload_len;
    if (len < 4) throw InvalidSpecError("runner: telegram_payload_len must hold the counter");
    std::vector<std::uint8_t> p(static_cast<std::size_t>(len));
    for (int i = 0; i < 4; ++i) p[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>((k >> (8 * i)) & 0xFF);
    std::mt19937_64 fill = rng::stream(cfg.seed, "payload-fill", k);
    for (std::size_t i = 4; i < p.size(); ++i) p[i] = static_cast<std::uint8_t>(fill() & 0xFF);
    return p;
}

// whole resampled blocks per capture window; the +1 input sample keeps
// the last output sample inside the interpolation span
struct WindowPlan {
    int blocks = 0;
    std::size_t n_in = 0;
    std::size_t n_out = 0;  // samples actually stored
};

WindowPlan plan_window(const ScenarioConfig& cfg, double content_s) {
    WindowPlan w;
    const double ratio = cfg.f_res / cfg.f_s;
    w.blocks = static_cast<int>(
        std::ceil(content_s * cfg.f_res / static_cast<double>(cfg.fft_len) - 1e-9));
    w.n_out = static_cast<std::size_t>(w.blocks) * static_cast<std::size_t>(cfg.fft_len);
    const double quantum = static_cast<double>(cfg.fft_len) / ratio;
    if (std::abs(quantum - std::round(quantum)) < 1e-6) {
        w.n_in = static_cast<std::size_t>(w.blocks) *
                     static_cast<std::size_t>(std::llround(quantum)) +
                 1;
    } else {
        w.n_in = static_cast<std::size_t>(
                     std::ceil(static_cast<double>(w.n_out) / ratio)) +
                 2;
    }
    return w;
}

void store_window(RingStore& store, const BasebandSignal& resampled, int channel_id,
                  int blocks, int fft_len, int bits) {
    for (int b = 0; b < blocks; ++b) {
        BasebandSignal slice;
        slice.sample_rate = resampled.sample_rate;
        slice.t0 = resampled.time_of_sample(static_cast<std::int64_t>(b) * fft_len);
        auto begin = resampled.samples.begin() + static_cast<std::ptrdiff_t>(b) * fft_len;
        slice.samples.assign(begin, begin + fft_len);
        QuantizedBlock qb = quantize(slice, bits, channel_id);
        store.store_block(channel_id, std::move(qb));
    }
}

struct PairSeries {
    std::vector<double> t_mid_s;
    std::vector<std::int64_t> t_mid_ns;
    std::vector<double> tau, sigma_tau, cfo, sigma_cfo;
};

void write_sliding_sigma(std::ofstream& out, const std::string& pair,
                         const std::vector<std::int64_t>& t_ns,
                         const std::vector<double>& t_s, const std::vector<double>& value,
                         const std::vector<double>& pred) {
    constexpr std::size_t kWin = 20;
    if (value.size() < kWin) return;
    for (std::size_t end = kWin - 1; end < value.size(); ++end) {
        const std::size_t beg = end + 1 - kWin;
        std::vector<double> xs(t_s.begin() + static_cast<std::ptrdiff_t>(beg),
                               t_s.begin() + static_cast<std::ptrdiff_t>(end + 1));
        std::vector<double> ys(value.begin() + static_cast<std::ptrdiff_t>(beg),
                               value.begin() + static_cast<std::ptrdiff_t>(end + 1));
        dsp::LineFit fit = dsp::fit_line(xs, ys);
        double emp = std::sqrt(std::max(fit.resid_var, 0.0));
        double p = 0.0;
        for (std::size_t i = beg; i <= end; ++i) p += pred[i];
        p /= static_cast<double>(kWin);
        out << t_ns[end] << ',' << pair << ',' << fmt(emp) << ',' << fmt(p) << '\n';
    }
}

ExperimentResult run_per_table(const ScenarioConfig& cfg, const fs::path& out_dir);
ExperimentResult run_tdoa_mc(const ScenarioConfig& cfg, const fs::path& out_dir);

}  // namespace

ExperimentResult run_scenario(const ScenarioConfig& cfg, const fs::path& out_dir,
                              RunMode mode) {
    fs::create_directories(out_dir);
    ExperimentResult res;
    res.name = mode == RunMode::sockets ? "run-sockets" : "run";
    res.config_hash = scenario_hash(cfg);

    TelegramSpec tspec_base = cfg.telegram;
    tspec_base.sample_rate = cfg.f_s;
    const BurstSchedule sched0 = plan_hops(tspec_base);  // geometry is epoch independent
    const double span_s = static_cast<double>(sched0.span_samples) / cfg.f_s;

    const WindowPlan win0 = plan_window(cfg, kLeadS + span_s + 0.07);
    const WindowPlan win1 = plan_window(cfg, kLeadS + cfg.sync_duration_s + 0.05);
    const double soo_dur_s =
        0.02 + kLeadS + static_cast<double>(win1.n_out) / cfg.f_res + 0.05;

    // stations: retention stores plus a transport endpoint each
    const std::size_t n_st = cfg.stations.size();
    std::vector<std::unique_ptr<RingStore>> stores;
    std::vector<std::unique_ptr<StationServer>> servers;
    std::vector<std::unique_ptr<IqEndpoint>> endpoints;
    for (std::size_t i = 0; i < n_st; ++i) {
        stores.push_back(std::make_unique<RingStore>(cfg.ring_capacity_s, 2));
        IqService svc;
        svc.store = stores.back().get();
        svc.station_id = cfg.stations[i].id;
        svc.sample_rate = cfg.f_res;
        svc.fft_len = cfg.fft_len;
        svc.n_subbands = cfg.n_subbands;
        svc.compress = cfg.compress_responses;
        if (mode == RunMode::sockets) {
            const int port = cfg.http_base_port + static_cast<int>(i);
            servers.push_back(std::make_unique<StationServer>(svc, port));
            servers.back()->start();
            endpoints.push_back(std::make_unique<HttpIqEndpoint>("127.0.0.1", port));
        } else {
            endpoints.push_back(std::make_unique<LocalEndpoint>(svc));
        }
    }

    std::ofstream jsonl(out_dir / "reports.jsonl");
    std::ofstream tau_csv(out_dir / "sync_tau.csv");
    std::ofstream cfo_csv(out_dir / "sync_cfo.csv");
    std::ofstream fix_csv(out_dir / "fixes.csv");
    tau_csv << "# per-epoch pairwise clock offsets (remote minus reference)\n"
               "t_mid_ns,pair,tau_s,sigma_tau_s\n";
    cfo_csv << "# per-epoch pairwise frequency offsets at the broadcast carrier\n"
               "t_mid_ns,pair,cfo_hz,sigma_cfo_hz\n";
    fix_csv << "# position fixes per telegram\n"
               "telegram_id,x_m,y_m,residual_rms_s,converged\n";

    const int ref_id = cfg.ref_station_id();
    std::size_t ref_idx = 0;
    for (std::size_t i = 0; i < n_st; ++i)
        if (cfg.stations[i].id == ref_id) ref_idx = i;
    const double d_ref = geometric_delay(cfg.soo_emitter.position,
                                         cfg.stations[ref_idx].position);

    std::map<int, std::size_t> n_ok;       // crc-valid matching telegrams per station
    std::map<int, double> rssi_sum;
    std::map<std::string, PairSeries> series;
    double pos_err_sq = 0.0;
    std::size_t n_fixes = 0, n_converged = 0;

    FetchOptions fopt;
    fopt.bits = cfg.frontend_bits;
    fopt.fft_len = cfg.fft_len;
    fopt.n_subbands = cfg.n_subbands;

    const std::vector<double> epochs = schedule_emitter(cfg.tx_interval_s, cfg.duration_s);
    for (std::size_t k = 0; k < epochs.size(); ++k) {
        Timestamp t_e;
        t_e.ns = std::llround(epochs[k] * 1e9);
        const Timestamp w0 = t_e.advanced_ns(-kLeadS * 1e9);
        logmsg("epoch " + std::to_string(k) + " at " + std::to_string(epochs[k]) + " s");

        TelegramSpec tspec = tspec_base;
        tspec.hop_pattern_seed = rng::derive_seed(cfg.seed, "telegram-epoch", k);
        tspec.payload = epoch_payload(cfg, k);
        auto [tsig, sched] = gen_telegram(tspec);
        tsig.t0 = t_e;

        SooSpec sspec = cfg.soo;
        sspec.sample_rate = cfg.f_s;
        sspec.constellation_seed = rng::derive_seed(cfg.seed, "soo", k);
        BasebandSignal soo = gen_soo(sspec, soo_dur_s);
        soo.t0 = t_e.advanced_ns(-3e7);

        std::vector<TelegramReport> epoch_reports;
        for (std::size_t i = 0; i < n_st; ++i) {
            const StationConfig& st = cfg.stations[i];
            BasebandSignal cap0 = capture_window(tsig, cfg, st.id, 0, w0, win0.n_in);

            DecoderConfig dcfg;
            dcfg.spec = tspec;
            dcfg.spec.payload.clear();  // the receiver does not know the content
            dcfg.rx_gain_db = st.rx_gain_db;
            dcfg.station_id = st.id;
            try {
                std::vector<DetectionCandidate> cands = detect_telegram(cap0, dcfg);
                if (cands.empty()) {
                    res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                         std::to_string(st.id) + ": no detection");
                } else {
                    auto best = std::max_element(
                        cands.begin(), cands.end(),
                        [](const auto& a, const auto& b) { return a.metric < b.metric; });
                    TelegramReport rep = decode(cap0, *best, dcfg);
                    jsonl << report_to_jsonl(rep) << '\n';
                    if (rep.crc_ok && rep.payload == tspec.payload) {
                        ++n_ok[st.id];
                        rssi_sum[st.id] += rep.rssi_dbm;
                    } else {
                        res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                             std::to_string(st.id) + ": corrupted telegram");
                    }
                    epoch_reports.push_back(std::move(rep));
                }
            } catch (const Error& e) {
                res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                     std::to_string(st.id) + ": " + e.what());
            }

            BasebandSignal far0 = farrow_resample(cap0, cfg.f_res);
            store_window(*stores[i], far0, 0, win0.blocks, cfg.fft_len, cfg.frontend_bits);
            BasebandSignal cap1 = capture_window(soo, cfg, st.id, 1, w0, win1.n_in);
            BasebandSignal far1 = farrow_resample(cap1, cfg.f_res);
            store_window(*stores[i], far1, 1, win1.blocks, cfg.fft_len, cfg.frontend_bits);
        }

        // aggregator: pull IQ back through the transport
        std::map<int, SyncEstimate> estimates;
        try {
            for (std::size_t i = 0; i < n_st; ++i) {
                BasebandSignal probe = fetch_iq(*endpoints[i], t_e, 0.05, 0, fopt);
                const std::size_t expect =
                    static_cast<std::size_t>(std::llround(0.05 * cfg.f_res));
                if (probe.size() != expect)
                    res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                         std::to_string(cfg.stations[i].id) +
                                         ": short uplink fetch");
            }

            BasebandSignal s_ref =
                fetch_iq(*endpoints[ref_idx], t_e, cfg.sync_duration_s, 1, fopt);
            SyncEstimate ident;
            ident.t_mid = t_e.advanced_seconds(cfg.sync_duration_s / 2.0);
            estimates[ref_id] = ident;

            for (std::size_t i = 0; i < n_st; ++i) {
                if (i == ref_idx) continue;
                const StationConfig& st = cfg.stations[i];
                BasebandSignal s_rem =
                    fetch_iq(*endpoints[i], t_e, cfg.sync_duration_s, 1, fopt);
                SyncConfig scfg;
                scfg.blocks = cfg.sync_blocks;
                scfg.soo_carrier_hz = cfg.soo_emitter.carrier_hz;
                scfg.path_delay_diff_s =
                    geometric_delay(cfg.soo_emitter.position, st.position) - d_ref;
                try {
                    SyncEstimate est = estimate_sync(s_ref, s_rem, scfg);
                    estimates[st.id] = est;
                    const std::string pair =
                        "bs" + std::to_string(st.id) + "-bs" + std::to_string(ref_id);
                    tau_csv << est.t_mid.ns << ',' << pair << ',' << fmt(est.tau_s) << ','
                            << fmt(est.sigma_tau_s) << '\n';
                    cfo_csv << est.t_mid.ns << ',' << pair << ',' << fmt(est.cfo_hz) << ','
                            << fmt(est.sigma_cfo_hz) << '\n';
                    PairSeries& ps = series[pair];
                    ps.t_mid_ns.push_back(est.t_mid.ns);
                    ps.t_mid_s.push_back(static_cast<double>(est.t_mid.ns) * 1e-9);
                    ps.tau.push_back(est.tau_s);
                    ps.sigma_tau.push_back(est.sigma_tau_s);
                    ps.cfo.push_back(est.cfo_hz);
                    ps.sigma_cfo.push_back(est.sigma_cfo_hz);
                } catch (const Error& e) {
                    res.errors.push_back("epoch " + std::to_string(k) + " sync bs" +
                                         std::to_string(st.id) + ": " + e.what());
                }
            }
        } catch (const Error& e) {
            res.errors.push_back("epoch " + std::to_string(k) + " transport: " + e.what());
        }

        if (cfg.enable_tdoa) {
            std::vector<std::string> warnings;
            std::vector<TdoaSet> sets =
                tdoa_from_reports(epoch_reports, estimates, ref_id, cfg.stations,
                                  cfg.sync_validity_s, &warnings);
            for (const auto& w : warnings)
                res.errors.push_back("epoch " + std::to_string(k) + " tdoa: " + w);
            for (const auto& set : sets) {
                TdoaSolverOptions opt;
                opt.solve_3d = cfg.solve_3d;
                try {
                    PositionFix fix = solve_position(set.measurements, cfg.stations, opt);
                    fix_csv << k << ',' << fmt(fix.position[0]) << ',' << fmt(fix.position[1])
                            << ',' << fmt(fix.residual_rms_s) << ','
                            << (fix.converged ? 1 : 0) << '\n';
                    ++n_fixes;
                    if (fix.converged) ++n_converged;
                    const double dx = fix.position[0] - cfg.lpwan_emitter.position[0];
                    const double dy = fix.position[1] - cfg.lpwan_emitter.position[1];
                    double err_sq = dx * dx + dy * dy;
                    if (cfg.solve_3d) {
                        const double dz = fix.position[2] - cfg.lpwan_emitter.position[2];
                        err_sq += dz * dz;
                    }
                    pos_err_sq += err_sq;
                } catch (const Error& e) {
                    res.errors.push_back("epoch " + std::to_string(k) +
                                         " solver: " + e.what());
                }
            }
        }
    }

    for (auto& srv : servers) srv->stop();

    // sliding-window scatter vs predicted sigma
    std::ofstream tau_sig(out_dir / "sync_tau_sigma.csv");
    std::ofstream cfo_sig(out_dir / "sync_cfo_sigma.csv");
    tau_sig << "# sliding 20-epoch windows, linearly detrended: empirical scatter of tau\n"
               "# against the mean predicted one-sigma\n"
               "t_mid_ns,pair,sigma_emp_s,sigma_pred_s\n";
    cfo_sig << "# sliding 20-epoch windows, linearly detrended: empirical scatter of cfo\n"
               "# against the mean predicted one-sigma\n"
               "t_mid_ns,pair,sigma_emp_hz,sigma_pred_hz\n";
    for (const auto& [pair, ps] : series) {
        write_sliding_sigma(tau_sig, pair, ps.t_mid_ns, ps.t_mid_s, ps.tau, ps.sigma_tau);
        write_sliding_sigma(cfo_sig, pair, ps.t_mid_ns, ps.t_mid_s, ps.cfo, ps.sigma_cfo);
    }

    // summary
    const std::size_t n_epochs = epochs.size();
    json summary;
    summary["config_hash"] = res.config_hash;
    summary["mode"] = mode == RunMode::sockets ? "sockets" : "inproc";
    summary["n_epochs"] = n_epochs;
    res.metrics["n_epochs"] = static_cast<double>(n_epochs);
    for (const auto& st : cfg.stations) {
        const std::size_t ok = n_ok.count(st.id) ? n_ok[st.id] : 0;
        const double per =
            1.0 - static_cast<double>(ok) / static_cast<double>(n_epochs);
        const double rssi = ok > 0 ? rssi_sum[st.id] / static_cast<double>(ok) : 0.0;
        summary["per"]["bs" + std::to_string(st.id)] = per;
        summary["rssi_mean_dbm"]["bs" + std::to_string(st.id)] = rssi;
        res.metrics["per_bs" + std::to_string(st.id)] = per;
        res.metrics["rssi_mean_bs" + std::to_string(st.id)] = rssi;
    }
    double st_sum = 0.0, sc_sum = 0.0;
    std::size_t n_pairs_rows = 0;
    for (const auto& [pair, ps] : series) {
        for (std::size_t i = 0; i < ps.sigma_tau.size(); ++i) {
            st_sum += ps.sigma_tau[i];
            sc_sum += ps.sigma_cfo[i];
            ++n_pairs_rows;
        }
    }
    const double sig_tau_mean = n_pairs_rows ? st_sum / static_cast<double>(n_pairs_rows) : 0.0;
    const double sig_cfo_mean = n_pairs_rows ? sc_sum / static_cast<double>(n_pairs_rows) : 0.0;
    summary["sigma_tau_pred_mean_s"] = sig_tau_mean;
    summary["sigma_cfo_pred_mean_hz"] = sig_cfo_mean;
    res.metrics["sigma_tau_pred_mean_s"] = sig_tau_mean;
    res.metrics["sigma_cfo_pred_mean_hz"] = sig_cfo_mean;
    const double rmse = n_fixes ? std::sqrt(pos_err_sq / static_cast<double>(n_fixes)) : 0.0;
    summary["position_rmse_m"] = rmse;
    summary["n_fixes"] = n_fixes;
    summary["n_converged"] = n_converged;
    summary["n_errors"] = res.errors.size();
    res.metrics["position_rmse_m"] = rmse;
    res.metrics["n_fixes"] = static_cast<double>(n_fixes);
    res.metrics["n_converged"] = static_cast<double>(n_converged);
    res.metrics["n_errors"] = static_cast<double>(res.errors.size());

    std::ofstream sj(out_dir / "summary.json");
    sj << summary.dump(2) << '\n';

    res.csv_paths = {out_dir / "sync_tau.csv", out_dir / "sync_cfo.csv",
                     out_dir / "sync_tau_sigma.csv", out_dir / "sync_cfo_sigma.csv",
                     out_dir / "fixes.csv"};
    res.summary_json_path = out_dir / "summary.json";
    return res;
}

namespace {

ExperimentResult run_per_table(const ScenarioConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ExperimentResult res;
    res.name = "per-table";
    res.config_hash = scenario_hash(cfg);

    TelegramSpec tspec_base = cfg.telegram;
    tspec_base.sample_rate = cfg.f_s;
    const BurstSchedule sched0 = plan_hops(tspec_base);
    const double span_s = static_cast<double>(sched0.span_samples) / cfg.f_s;
    const std::size_t n_in = static_cast<std::size_t>(
        std::llround((kLeadS + span_s + 0.05) * cfg.f_s));

    std::ofstream jsonl(out_dir / "reports.jsonl");
    std::map<int, std::size_t> n_ok;
    std::map<int, double> rssi_sum, snr_sum;

    const std::vector<double> epochs = schedule_emitter(cfg.tx_interval_s, cfg.duration_s);
    for (std::size_t k = 0; k < epochs.size(); ++k) {
        Timestamp t_e;
        t_e.ns = std::llround(epochs[k] * 1e9);
        const Timestamp w0 = t_e.advanced_ns(-kLeadS * 1e9);
        logmsg("per-table epoch " + std::to_string(k));

        TelegramSpec tspec = tspec_base;
        tspec.hop_pattern_seed = rng::derive_seed(cfg.seed, "telegram-epoch", k);
        tspec.payload = epoch_payload(cfg, k);
        auto [tsig, sched] = gen_telegram(tspec);
        tsig.t0 = t_e;

        for (const StationConfig& st : cfg.stations) {
            BasebandSignal cap0 = capture_window(tsig, cfg, st.id, 0, w0, n_in);
            DecoderConfig dcfg;
            dcfg.spec = tspec;
            dcfg.spec.payload.clear();
            dcfg.rx_gain_db = st.rx_gain_db;
            dcfg.station_id = st.id;
            try {
                std::vector<DetectionCandidate> cands = detect_telegram(cap0, dcfg);
                if (cands.empty()) {
                    res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                         std::to_string(st.id) + ": no detection");
                    continue;
                }
                auto best = std::max_element(
                    cands.begin(), cands.end(),
                    [](const auto& a, const auto& b) { return a.metric < b.metric; });
                TelegramReport rep = decode(cap0, *best, dcfg);
                jsonl << report_to_jsonl(rep) << '\n';
                if (rep.crc_ok && rep.payload == tspec.payload) {
                    ++n_ok[st.id];
                    rssi_sum[st.id] += rep.rssi_dbm;
                    snr_sum[st.id] += rep.snr_db;
                } else {
                    res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                         std::to_string(st.id) + ": corrupted telegram");
                }
            } catch (const Error& e) {
                res.errors.push_back("epoch " + std::to_string(k) + " bs" +
                                     std::to_string(st.id) + ": " + e.what());
            }
        }
    }

    const std::size_t n_epochs = epochs.size();
    std::ofstream table(out_dir / "per_table.csv");
    table << "# packet delivery and received power per station\n"
             "station_id,n_expected,n_received,per,rssi_mean_dbm,rssi_model_dbm,"
             "snr_mean_db\n";
    json summary;
    summary["config_hash"] = res.config_hash;
    summary["n_epochs"] = n_epochs;
    res.metrics["n_epochs"] = static_cast<double>(n_epochs);
    for (const auto& st : cfg.stations) {
        const std::size_t ok = n_ok.count(st.id) ? n_ok[st.id] : 0;
        const double per = 1.0 - static_cast<double>(ok) / static_cast<double>(n_epochs);
        const double rssi = ok ? rssi_sum[st.id] / static_cast<double>(ok) : 0.0;
        const double snr = ok ? snr_sum[st.id] / static_cast<double>(ok) : 0.0;
        const double model = applied_impairments(cfg, st.id, 0).rssi_dbm;
        table << st.id << ',' << n_epochs << ',' << ok << ',' << fmt(per) << ','
              << fmt(rssi) << ',' << fmt(model) << ',' << fmt(snr) << '\n';
        summary["per"]["bs" + std::to_string(st.id)] = per;
        summary["rssi_mean_dbm"]["bs" + std::to_string(st.id)] = rssi;
        res.metrics["per_bs" + std::to_string(st.id)] = per;
        res.metrics["rssi_mean_bs" + std::to_string(st.id)] = rssi;
        res.metrics["n_received_bs" + std::to_string(st.id)] = static_cast<double>(ok);
    }
    summary["n_errors"] = res.errors.size();
    res.metrics["n_errors"] = static_cast<double>(res.errors.size());
    std::ofstream sj(out_dir / "summary.json");
    sj << summary.dump(2) << '\n';
    res.csv_paths = {out_dir / "per_table.csv"};
    res.summary_json_path = out_dir / "summary.json";
    return res;
}

ExperimentResult run_tdoa_mc(const ScenarioConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ExperimentResult res;
    res.name = "tdoa-mc";
    res.config_hash = scenario_hash(cfg);

    constexpr int kTrials = 500;
    constexpr double kSigmaS = 2e-10;
    const int ref_id = cfg.ref_station_id();
    const auto& truth = cfg.lpwan_emitter.position;
    const double d_ref = geometric_delay(truth, cfg.station(ref_id).position);

    std::vector<TdoaMeasurement> clean;
    for (const auto& st : cfg.stations) {
        if (st.id == ref_id) continue;
        TdoaMeasurement m;
        m.station_id = st.id;
        m.ref_station_id = ref_id;
        m.delta_t_s = geometric_delay(truth, st.position) - d_ref;
        m.sigma_s = kSigmaS;
        clean.push_back(m);
    }

    TdoaSolverOptions opt;
    opt.solve_3d = cfg.solve_3d;
    PositionFix at_truth;
    {
        TdoaSolverOptions t_opt = opt;
        t_opt.initial_guess = truth;
        at_truth = solve_position(clean, cfg.stations, t_opt);
    }
    const double pred_rmse =
        std::sqrt(at_truth.covariance[0] + at_truth.covariance[4] +
                  (cfg.solve_3d ? at_truth.covariance[8] : 0.0));

    std::ofstream csv(out_dir / "tdoa_mc.csv");
    csv << "# solver Monte Carlo with Gaussian timing noise per measurement\n"
           "trial,x_m,y_m,err_m\n";
    std::mt19937_64 gen = rng::stream(cfg.seed, "tdoa-mc");
    std::normal_distribution<double> gauss(0.0, 1.0);
    double err_sq = 0.0;
    int converged = 0;
    for (int t = 0; t < kTrials; ++t) {
        std::vector<TdoaMeasurement> meas = clean;
        for (auto& m : meas) m.delta_t_s += kSigmaS * gauss(gen);
        PositionFix fix = solve_position(meas, cfg.stations, opt);
        if (fix.converged) ++converged;
        const double dx = fix.position[0] - truth[0];
        const double dy = fix.position[1] - truth[1];
        double e2 = dx * dx + dy * dy;
        if (cfg.solve_3d) {
            const double dz = fix.position[2] - truth[2];
            e2 += dz * dz;
        }
        err_sq += e2;
        csv << t << ',' << fmt(fix.position[0]) << ',' << fmt(fix.position[1]) << ','
            << fmt(std::sqrt(e2)) << '\n';
    }
    const double rmse = std::sqrt(err_sq / kTrials);

    json summary;
    summary["config_hash"] = res.config_hash;
    summary["trials"] = kTrials;
    summary["sigma_s"] = kSigmaS;
    summary["rmse_m"] = rmse;
    summary["predicted_rmse_m"] = pred_rmse;
    summary["n_converged"] = converged;
    res.metrics["rmse_m"] = rmse;
    res.metrics["predicted_rmse_m"] = pred_rmse;
    res.metrics["n_converged"] = converged;
    std::ofstream sj(out_dir / "summary.json");
    sj << summary.dump(2) << '\n';
    res.csv_paths = {out_dir / "tdoa_mc.csv"};
    res.summary_json_path = out_dir / "summary.json";
    return res;
}

}  // namespace

ExperimentResult run_experiment(const std::string& name, const ScenarioConfig& cfg,
                                const fs::path& out_dir) {
    if (name == "run" || name == "sync-sigma") {
        ExperimentResult r = run_scenario(cfg, out_dir, RunMode::inproc);
        r.name = name;
        return r;
    }
    if (name == "per-table") return run_per_table(cfg, out_dir);
    if (name == "tdoa-mc") return run_tdoa_mc(cfg, out_dir);
    throw InvalidSpecError("experiment: unknown name '" + name +
                           "' (run, per-table, sync-sigma, tdoa-mc)");
}

std::string apply_config_overrides(const std::string& json_text,
                                   const std::vector<std::string>& overrides) {
    json j = json::parse(json_text);
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw InvalidSpecError("override: expected key.path=value, got '" + ov + "'");
        const std::string path = ov.substr(0, eq);
        const std::string value = ov.substr(eq + 1);

        // a.b[2].c  ->  /a/b/2/c
        std::string ptr;
        for (std::size_t i = 0; i < path.size(); ++i) {
            char c = path[i];
            if (c == '.' || c == '[') {
                ptr += '/';
            } else if (c == ']') {
                // separator only
            } else {
                if (ptr.empty()) ptr += '/';
                ptr += c;
            }
        }
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::parse_error&) {
            parsed = value;  // bare strings stay strings
        }
        try {
            j[json::json_pointer(ptr)] = parsed;
        } catch (const json::exception& e) {
            throw InvalidSpecError("override: cannot apply '" + ov + "': " + e.what());
        }
    }
    return j.dump(2);
}

}  // namespace cran
