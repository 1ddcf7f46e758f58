#include "cran/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include <json.hpp>

#include "cran/dsp.hpp"
#include "cran/errors.hpp"
#include "cran/fft.hpp"

namespace cran {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// largest power of two <= sps/4 (targets ~4 decimated samples per
// symbol; falls back to 1 for odd rates)
int decimation_factor(int sps) {
    int d = 1;
    while (d * 2 <= sps / 4) d *= 2;
    return d;
}

struct BandSeries {
    std::vector<cplx> y;  // band content at full-rate positions m*D, demodulated
};

}  // namespace

std::vector<DetectionCandidate> detect_telegram(const BasebandSignal& stream,
                                                const DecoderConfig& cfg) {
    const BurstSchedule sched = plan_hops(cfg.spec);
    const std::int64_t n = static_cast<std::int64_t>(stream.size());
    if (n < sched.span_samples)
        throw InvalidSpecError("detect: stream shorter than one telegram span");
    const double fs = stream.sample_rate;
    const int D = decimation_factor(sched.sps);

    const std::size_t nf = fft::next_pow2(static_cast<std::size_t>(n));
    std::vector<cplx> spec(stream.samples);
    spec.resize(nf, cplx{0.0, 0.0});
    fft::transform(spec, false);

    const std::size_t w = nf / static_cast<std::size_t>(D);

    // decimated preamble template (band-limited well below the
    // decimated Nyquist, so plain subsampling is exact enough)
    std::vector<cplx> tpl_full = preamble_template(cfg.spec);
    const std::size_t n_tap = tpl_full.size() / static_cast<std::size_t>(D);
    std::vector<cplx> tpl(n_tap);
    for (std::size_t m = 0; m < n_tap; ++m) tpl[m] = tpl_full[m * static_cast<std::size_t>(D)];
    double tpl_energy = 0.0;
    for (const cplx& v : tpl) tpl_energy += std::norm(v);

    // one narrowband series per distinct slot frequency
    std::map<double, BandSeries> bands;
    for (const auto& bp : sched.bursts) {
        if (bands.count(bp.freq_hz)) continue;
        std::int64_t center = std::llround(bp.freq_hz / fs * static_cast<double>(nf));
        std::vector<cplx> slice(w, cplx{0.0, 0.0});
        const std::int64_t half = static_cast<std::int64_t>(w) / 2;
        for (std::int64_t j = -half; j < half; ++j) {
            std::int64_t src = (center + j) % static_cast<std::int64_t>(nf);
            if (src < 0) src += static_cast<std::int64_t>(nf);
            std::int64_t dst = (j + static_cast<std::int64_t>(w)) % static_cast<std::int64_t>(w);
            slice[static_cast<std::size_t>(dst)] = spec[static_cast<std::size_t>(src)];
        }
        fft::transform(slice, true);
        bands.emplace(bp.freq_hz, BandSeries{std::move(slice)});
    }

    // burst-averaged normalized correlation over the decimated grid
    const std::int64_t p_max = (n - sched.span_samples) / D;
    std::vector<double> metric(static_cast<std::size_t>(p_max + 1), 0.0);
    std::vector<std::int64_t> q_off(sched.bursts.size());
    for (std::size_t b = 0; b < sched.bursts.size(); ++b)
        q_off[b] = (sched.bursts[b].start_sample + D / 2) / D;

    for (std::int64_t p = 0; p <= p_max; ++p) {
        double acc = 0.0;
        for (std::size_t b = 0; b < sched.bursts.size(); ++b) {
            const std::vector<cplx>& y = bands.at(sched.bursts[b].freq_hz).y;
            const std::int64_t q = p + q_off[b];
            if (q < 0 || q + static_cast<std::int64_t>(n_tap) > static_cast<std::int64_t>(y.size()))
                continue;
            cplx c{0.0, 0.0};
            double seg_energy = 0.0;
            for (std::size_t m = 0; m < n_tap; ++m) {
                const cplx& v = y[static_cast<std::size_t>(q) + m];
                c += std::conj(tpl[m]) * v;
                seg_energy += std::norm(v);
            }
            if (seg_energy > 0.0) acc += std::abs(c) / std::sqrt(tpl_energy * seg_energy);
        }
        metric[static_cast<std::size_t>(p)] = acc / static_cast<double>(sched.bursts.size());
    }

    // local maxima above threshold, merged within half a telegram span
    std::vector<DetectionCandidate> out;
    const std::int64_t merge_dist = sched.span_samples / (2 * D);
    for (std::int64_t p = 0; p <= p_max; ++p) {
        double v = metric[static_cast<std::size_t>(p)];
        if (v < cfg.detect_threshold) continue;
        if (p > 0 && metric[static_cast<std::size_t>(p - 1)] > v) continue;
        if (p < p_max && metric[static_cast<std::size_t>(p + 1)] > v) continue;
        double ym1 = p > 0 ? metric[static_cast<std::size_t>(p - 1)] : v;
        double yp1 = p < p_max ? metric[static_cast<std::size_t>(p + 1)] : v;
        double delta = dsp::parabolic_peak_offset(ym1, v, yp1);
        double pos = (static_cast<double>(p) + delta) * D;
        if (!out.empty() && pos - out.back().sample_pos < static_cast<double>(merge_dist * D)) {
            if (v > out.back().metric) out.back() = {pos, v};
            continue;
        }
        out.push_back({pos, v});
    }
    return out;
}

namespace {

// combined baseband template: preamble and postamble pulses at their
// absolute symbol indices (known rotation), data region zero
std::vector<cplx> pilot_template(const TelegramSpec& spec, const BurstSchedule& sched) {
    const int sps = sched.sps;
    const int n_sym = sched.symbols_per_burst;
    const std::vector<double> pulse = dsp::rrc_taps(spec.rolloff, sps, spec.pulse_span);
    std::vector<cplx> tpl(static_cast<std::size_t>(spec.burst_len), cplx{0.0, 0.0});
    auto place = [&](int k, int bit) {
        double a = bit ? -1.0 : 1.0;
        cplx sym = a * std::polar(1.0, 0.5 * std::numbers::pi * k);
        std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(sps);
        for (std::size_t i = 0; i < pulse.size(); ++i) tpl[base + i] += sym * pulse[i];
    };
    for (int k = 0; k < spec.preamble_len; ++k) place(k, preamble_bits()[static_cast<std::size_t>(k)]);
    for (int k = 0; k < spec.postamble_len; ++k)
        place(n_sym - spec.postamble_len + k, postamble_bits()[static_cast<std::size_t>(k)]);
    return tpl;
}

struct BurstDecode {
    bool ok = false;
    double telegram_start = 0.0;  // stream position of telegram sample 0 per this burst
    std::int64_t s0 = 0;          // stream index of the search segment
    int best = 0;                 // pilot-stage alignment within the segment
    double dphi = 0.0;            // post-minus-pre pilot phase, rad
    std::vector<int> bits;
    std::vector<cplx> soft;   // phase-aligned matched filter outputs
    std::vector<cplx> wseg;   // slot-baseband segment, kept for the refinement pass
};

}  // namespace

TelegramReport decode(const BasebandSignal& stream, const DetectionCandidate& candidate,
                      const DecoderConfig& cfg) {
    const BurstSchedule sched = plan_hops(cfg.spec);
    const TelegramSpec& spec = cfg.spec;
    const int sps = sched.sps;
    const int n_sym = sched.symbols_per_burst;
    const double fs = stream.sample_rate;
    const std::int64_t n = static_cast<std::int64_t>(stream.size());

    const std::vector<cplx> tpl = pilot_template(spec, sched);
    const std::vector<double> pulse = dsp::rrc_taps(spec.rolloff, sps, spec.pulse_span);
    const std::size_t pre_end = static_cast<std::size_t>((spec.preamble_len + spec.pulse_span) * sps);
    const std::size_t post_beg = static_cast<std::size_t>((n_sym - spec.postamble_len) * sps);
    double e_pre = 0.0, e_post = 0.0;
    for (std::size_t i = 0; i < pre_end; ++i) e_pre += std::norm(tpl[i]);
    for (std::size_t i = post_beg; i < tpl.size(); ++i) e_post += std::norm(tpl[i]);

    constexpr int kSearch = 64;  // half-range of the timing search, samples
    const std::int64_t seg_len = spec.burst_len + 2 * kSearch + 1;

    std::vector<BurstDecode> decoded(sched.bursts.size());
    std::vector<double> starts;
    std::vector<cplx> soft_all;

    for (std::size_t b = 0; b < sched.bursts.size(); ++b) {
        const BurstPlacement& bp = sched.bursts[b];
        const double s_nom = candidate.sample_pos + static_cast<double>(bp.start_sample);
        const std::int64_t s0 = std::llround(s_nom) - kSearch;
        if (s0 < 0 || s0 + seg_len > n) continue;  // burst sticks out of the capture

        // demodulate the segment to the slot's baseband once
        std::vector<cplx> wseg(static_cast<std::size_t>(seg_len));
        const double wfreq = kTwoPi * bp.freq_hz / fs;
        for (std::int64_t i = 0; i < seg_len; ++i)
            wseg[static_cast<std::size_t>(i)] =
                stream.samples[static_cast<std::size_t>(s0 + i)] *
                std::polar(1.0, -wfreq * static_cast<double>(i));

        // pre and post windows are combined non-coherently: a residual
        // frequency offset rotates one against the other (~0.3 rad/Hz
        // between window centers) and would drag the coherent peak off
        // the true timing
        auto corr_mag = [&](int d) {
            cplx cp{0.0, 0.0}, cq{0.0, 0.0};
            const cplx* wp = wseg.data() + d;
            for (std::size_t i = 0; i < pre_end; ++i) cp += std::conj(tpl[i]) * wp[i];
            for (std::size_t i = post_beg; i < tpl.size(); ++i) cq += std::conj(tpl[i]) * wp[i];
            return std::abs(cp) + std::abs(cq);
        };

        // coarse/fine search; the correlation lobe is ~a symbol wide
        int best = kSearch;
        double best_v = -1.0;
        for (int d = 0; d <= 2 * kSearch; d += 8) {
            double v = corr_mag(d);
            if (v > best_v) best_v = v, best = d;
        }
        int lo = std::max(0, best - 8), hi = std::min(2 * kSearch, best + 8);
        for (int d = lo; d <= hi; ++d) {
            double v = corr_mag(d);
            if (v >= best_v) best_v = v, best = d;
        }
        double ym1 = best > 0 ? corr_mag(best - 1) : best_v;
        double yp1 = best < 2 * kSearch ? corr_mag(best + 1) : best_v;
        double frac = dsp::parabolic_peak_offset(ym1, best_v, yp1);

        BurstDecode& bd = decoded[b];
        bd.s0 = s0;
        bd.best = best;
        bd.telegram_start = static_cast<double>(s0 + best) + frac -
                            static_cast<double>(bp.start_sample);
        starts.push_back(bd.telegram_start);

        // pilot phases anchor a linear ramp across the burst
        const cplx* wp = wseg.data() + best;
        cplx g_pre{0.0, 0.0}, g_post{0.0, 0.0};
        for (std::size_t i = 0; i < pre_end; ++i) g_pre += std::conj(tpl[i]) * wp[i];
        for (std::size_t i = post_beg; i < tpl.size(); ++i) g_post += std::conj(tpl[i]) * wp[i];
        g_pre /= e_pre;
        g_post /= e_post;
        const double phi_pre = std::arg(g_pre);
        const double dphi = std::arg(g_post * std::conj(g_pre));
        const double k_pre = 0.5 * (spec.preamble_len - 1);
        const double k_post = static_cast<double>(n_sym - spec.postamble_len) +
                              0.5 * (spec.postamble_len - 1);

        bd.bits.resize(static_cast<std::size_t>(bp.n_bits));
        for (int i = 0; i < bp.n_bits; ++i) {
            const int k = spec.preamble_len + i;
            cplx y{0.0, 0.0};
            const cplx* zp = wp + static_cast<std::size_t>(k) * static_cast<std::size_t>(sps);
            for (std::size_t t = 0; t < pulse.size(); ++t) y += pulse[t] * zp[t];
            const double phi = phi_pre + dphi * (static_cast<double>(k) - k_pre) / (k_post - k_pre);
            cplx u = y * std::polar(1.0, -0.5 * std::numbers::pi * k - phi);
            bd.bits[static_cast<std::size_t>(i)] = u.real() < 0.0 ? 1 : 0;
            bd.soft.push_back(u);
        }
        bd.ok = true;
        bd.dphi = dphi;
        bd.wseg = std::move(wseg);
        soft_all.insert(soft_all.end(), bd.soft.begin(), bd.soft.end());
    }

    if (starts.size() * 2 < sched.bursts.size())
        throw NoLockError("decode: most bursts fall outside the capture");

    // Refinement pass. The pilot-only correlation is biased by the
    // data pulses between the pilot windows (several samples even
    // without noise), so remodulate each burst from the decided bits
    // and redo the timing against the complete waveform, with the
    // residual frequency offset taken out. Decisions at operating SNR
    // are reliable enough that this is effectively a matched filter.
    const double k_pre_c = 0.5 * (spec.preamble_len - 1);
    const double k_post_c = static_cast<double>(n_sym - spec.postamble_len) +
                            0.5 * (spec.postamble_len - 1);
    const double gap_s = (k_post_c - k_pre_c) * static_cast<double>(sps) / fs;
    double f_sum = 0.0;
    std::size_t f_cnt = 0;
    for (const auto& bd : decoded)
        if (bd.ok) f_sum += bd.dphi / (kTwoPi * gap_s), ++f_cnt;
    const double f_est = f_cnt > 0 ? f_sum / static_cast<double>(f_cnt) : 0.0;

    // Anchor the refinement on the telegram-wide mean rather than the
    // per-burst pilot peaks: individual pilot timings scatter by
    // several samples, the mean holds to a couple.
    const double anchor = dsp::mean(starts);

    std::vector<std::vector<cplx>> fulls(decoded.size());
    for (std::size_t b = 0; b < decoded.size(); ++b) {
        BurstDecode& bd = decoded[b];
        if (!bd.ok) continue;
        std::vector<int> sym_bits;
        sym_bits.reserve(static_cast<std::size_t>(n_sym));
        sym_bits.insert(sym_bits.end(), preamble_bits().begin(), preamble_bits().end());
        sym_bits.insert(sym_bits.end(), bd.bits.begin(), bd.bits.end());
        sym_bits.insert(sym_bits.end(), postamble_bits().begin(), postamble_bits().end());
        fulls[b] = modulate_burst(sym_bits, spec, 0.0);
    }

    // One refinement round at frequency guess f; returns the residual
    // offset still seen by the pilot phases afterwards.
    std::vector<double> starts2;
    auto refine = [&](double f) {
        starts2.clear();
        double resid_sum = 0.0;
        std::size_t resid_cnt = 0;
        for (std::size_t b = 0; b < decoded.size(); ++b) {
            BurstDecode& bd = decoded[b];
            if (!bd.ok) continue;
            const BurstPlacement& bp = sched.bursts[b];
            const std::vector<cplx>& full = fulls[b];

            std::vector<cplx> wr(bd.wseg.size());
            const double wrot = kTwoPi * f / fs;
            for (std::size_t i = 0; i < wr.size(); ++i)
                wr[i] = bd.wseg[i] * std::polar(1.0, -wrot * static_cast<double>(i));
            auto corr_full = [&](int d) {
                cplx c{0.0, 0.0};
                const cplx* wp = wr.data() + d;
                for (std::size_t i = 0; i < full.size(); ++i) c += std::conj(full[i]) * wp[i];
                return std::abs(c);
            };
            const int center = static_cast<int>(std::llround(
                anchor + static_cast<double>(bp.start_sample) - static_cast<double>(bd.s0)));
            const int lo = std::clamp(center - 16, 0, 2 * kSearch);
            const int hi = std::clamp(center + 16, 0, 2 * kSearch);
            int best = lo;
            double best_v = -1.0;
            for (int d = lo; d <= hi; d += 2) {
                double v = corr_full(d);
                if (v > best_v) best_v = v, best = d;
            }
            for (int d = std::max(lo, best - 2); d <= std::min(hi, best + 2); ++d) {
                if (d == best) continue;
                double v = corr_full(d);
                if (v > best_v) best_v = v, best = d;
            }
            double ym1 = best > 0 ? corr_full(best - 1) : best_v;
            double yp1 = best < 2 * kSearch ? corr_full(best + 1) : best_v;
            double frac = dsp::parabolic_peak_offset(ym1, best_v, yp1);
            bd.telegram_start = static_cast<double>(bd.s0 + best) + frac -
                                static_cast<double>(bp.start_sample);
            starts2.push_back(bd.telegram_start);

            // pilot phases at the refined alignment measure what is
            // left of the frequency offset
            const cplx* wp = wr.data() + best;
            cplx g_pre{0.0, 0.0}, g_post{0.0, 0.0};
            for (std::size_t i = 0; i < pre_end; ++i) g_pre += std::conj(tpl[i]) * wp[i];
            for (std::size_t i = post_beg; i < tpl.size(); ++i) g_post += std::conj(tpl[i]) * wp[i];
            resid_sum += std::arg(g_post * std::conj(g_pre)) / (kTwoPi * gap_s);
            ++resid_cnt;
        }
        return resid_cnt > 0 ? resid_sum / static_cast<double>(resid_cnt) : 0.0;
    };

    double f_run = f_est;
    f_run += refine(f_run);
    refine(f_run);

    TelegramReport rep;
    rep.station_id = cfg.station_id;
    rep.topic = cfg.topic_prefix + "/bs" + std::to_string(cfg.station_id) + "/uplink";

    const double p0 = dsp::mean(starts2);
    rep.toa = stream.t0.advanced_ns(p0 * 1e9 / fs);
    rep.toa_sigma_s =
        starts2.size() > 1
            ? dsp::stddev(starts2) / std::sqrt(static_cast<double>(starts2.size())) / fs
            : 1.0 / fs;

    // reassemble the bit string (missing bursts read as zeros)
    std::vector<std::uint8_t> bits(
        static_cast<std::size_t>(sched.bursts.size()) *
            static_cast<std::size_t>(sched.data_bits_per_burst),
        0);
    for (std::size_t b = 0; b < decoded.size(); ++b) {
        if (!decoded[b].ok) continue;
        for (std::size_t i = 0; i < decoded[b].bits.size(); ++i)
            bits[static_cast<std::size_t>(sched.bursts[b].first_bit) + i] =
                static_cast<std::uint8_t>(decoded[b].bits[i]);
    }
    auto byte_at = [&](std::size_t idx) {
        std::uint8_t v = 0;
        for (int bpos = 0; bpos < 8; ++bpos) v = static_cast<std::uint8_t>((v << 1) | bits[idx * 8 + bpos]);
        return v;
    };
    const std::size_t len = byte_at(0);
    if ((3 + len) * 8 <= bits.size() && len >= 1) {
        rep.payload.resize(len);
        for (std::size_t i = 0; i < len; ++i) rep.payload[i] = byte_at(1 + i);
        std::uint16_t crc_rx = static_cast<std::uint16_t>((byte_at(1 + len) << 8) | byte_at(2 + len));
        rep.crc_ok = dsp::crc16_ccitt(rep.payload.data(), rep.payload.size()) == crc_rx;
    } else {
        rep.crc_ok = false;  // length byte inconsistent with the burst budget
    }

    // RSSI: mean power over burst supports minus the off-burst noise
    // floor, referred back through the rx gain
    {
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
        for (std::size_t b = 0; b < sched.bursts.size(); ++b) {
            if (!decoded[b].ok) continue;
            std::int64_t s = std::llround(decoded[b].telegram_start +
                                          static_cast<double>(sched.bursts[b].start_sample));
            for (std::int64_t i = std::max<std::int64_t>(s, 0);
                 i < std::min<std::int64_t>(s + spec.burst_len, n); ++i)
                mask[static_cast<std::size_t>(i)] = 1;
        }
        double p_on = 0.0, p_off = 0.0;
        std::int64_t n_on = 0, n_off = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            double pw = std::norm(stream.samples[static_cast<std::size_t>(i)]);
            if (mask[static_cast<std::size_t>(i)])
                p_on += pw, ++n_on;
            else
                p_off += pw, ++n_off;
        }
        if (n_on > 0) p_on /= static_cast<double>(n_on);
        if (n_off > 0) p_off /= static_cast<double>(n_off);
        rep.rssi_dbm = dsp::lin_to_db(std::max(p_on - p_off, 1e-30)) - cfg.rx_gain_db;
    }

    // per-symbol SNR after the matched filter: in-phase carries
    // signal + noise, quadrature is noise only
    {
        double p_re = 0.0, p_im = 0.0;
        for (const cplx& u : soft_all) {
            p_re += u.real() * u.real();
            p_im += u.imag() * u.imag();
        }
        if (!soft_all.empty()) {
            p_re /= static_cast<double>(soft_all.size());
            p_im /= static_cast<double>(soft_all.size());
        }
        rep.snr_db = dsp::lin_to_db(std::max(p_re - p_im, 1e-30) / std::max(p_im, 1e-30));
    }
    return rep;
}

std::string report_to_jsonl(const TelegramReport& report) {
    nlohmann::json j;
    j["topic"] = report.topic;
    j["station_id"] = report.station_id;
    j["toa_ns"] = report.toa.ns;
    j["toa_frac_ns"] = report.toa.frac_ns;
    j["rssi_dbm"] = report.rssi_dbm;
    j["snr_db"] = report.snr_db;
    char buf[3];
    std::string hex;
    for (std::uint8_t b : report.payload) {
        std::snprintf(buf, sizeof buf, "%02x", b);
        hex += buf;
    }
    j["payload_hex"] = hex;
    j["crc_ok"] = report.crc_ok;
    return j.dump();
}

TelegramReport report_from_jsonl(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    TelegramReport rep;
    rep.topic = j.at("topic").get<std::string>();
    rep.station_id = j.at("station_id").get<int>();
    rep.toa.ns = j.at("toa_ns").get<std::int64_t>();
    rep.toa.frac_ns = j.at("toa_frac_ns").get<double>();
    rep.rssi_dbm = j.at("rssi_dbm").get<double>();
    rep.snr_db = j.at("snr_db").get<double>();
    const std::string hex = j.at("payload_hex").get<std::string>();
    if (hex.size() % 2 != 0) throw FramingError("report: odd payload_hex length");
    rep.payload.reserve(hex.size() / 2);
    auto nyb = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw FramingError("report: bad hex digit in payload_hex");
    };
    for (std::size_t i = 0; i < hex.size(); i += 2)
        rep.payload.push_back(static_cast<std::uint8_t>((nyb(hex[i]) << 4) | nyb(hex[i + 1])));
    rep.crc_ok = j.at("crc_ok").get<bool>();
    return rep;
}

}  // namespace cran
