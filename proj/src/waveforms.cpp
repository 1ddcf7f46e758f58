#include "cran/waveforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cran/dsp.hpp"
#include "cran/errors.hpp"
#include "cran/fft.hpp"
#include "cran/rng.hpp"

namespace cran {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

int checked_sps(const TelegramSpec& spec) {
    if (spec.symbol_rate <= 0.0 || spec.sample_rate <= 0.0)
        throw InvalidSpecError("telegram: rates must be positive");
    double sps_f = spec.sample_rate / spec.symbol_rate;
    int sps = static_cast<int>(std::lround(sps_f));
    if (sps < 4 || std::abs(sps_f - sps) > 1e-9)
        throw InvalidSpecError("telegram: sample_rate/symbol_rate must be an integer >= 4");
    return sps;
}
}  // namespace

std::vector<double> TelegramSpec::default_freq_slots() {
    std::vector<double> slots(48);
    for (int i = 0; i < 48; ++i)
        slots[static_cast<std::size_t>(i)] = -700e3 + 1400e3 * i / 47.0;
    return slots;
}

const std::vector<int>& preamble_bits() {
    static const std::vector<int> bits = {0, 0, 0, 1, 1, 0, 1, 0};
    return bits;
}

const std::vector<int>& postamble_bits() {
    static const std::vector<int> bits = {0, 1, 1, 0, 1, 0, 0, 1};
    return bits;
}

std::vector<std::uint8_t> telegram_bits(const TelegramSpec& spec) {
    std::vector<std::uint8_t> bytes;
    bytes.push_back(static_cast<std::uint8_t>(spec.payload.size()));
    bytes.insert(bytes.end(), spec.payload.begin(), spec.payload.end());
    std::uint16_t crc = dsp::crc16_ccitt(spec.payload.data(), spec.payload.size());
    bytes.push_back(static_cast<std::uint8_t>(crc >> 8));
    bytes.push_back(static_cast<std::uint8_t>(crc & 0xFF));

    std::vector<std::uint8_t> bits;
    bits.reserve(bytes.size() * 8);
    for (std::uint8_t by : bytes)
        for (int b = 7; b >= 0; --b) bits.push_back((by >> b) & 1);
    return bits;
}

std::vector<cplx> modulate_burst(const std::vector<int>& bits,
                                 const TelegramSpec& spec, double freq_hz) {
    const int sps = checked_sps(spec);
    const int n_sym = static_cast<int>(bits.size());
    const std::vector<double> pulse = dsp::rrc_taps(spec.rolloff, sps, spec.pulse_span);
    const std::size_t len =
        static_cast<std::size_t>(n_sym + spec.pulse_span) * static_cast<std::size_t>(sps);
    std::vector<cplx> out(len, cplx{0.0, 0.0});

    for (int k = 0; k < n_sym; ++k) {
        // pi/2-BPSK: antipodal symbol rotated by 90 deg per index
        double a = bits[static_cast<std::size_t>(k)] ? -1.0 : 1.0;
        cplx sym = a * std::polar(1.0, 0.5 * std::numbers::pi * k);
        std::size_t base = static_cast<std::size_t>(k) * static_cast<std::size_t>(sps);
        for (std::size_t i = 0; i < pulse.size(); ++i) out[base + i] += sym * pulse[i];
    }
    if (freq_hz != 0.0) {
        double w = kTwoPi * freq_hz / spec.sample_rate;
        for (std::size_t t = 0; t < out.size(); ++t)
            out[t] *= std::polar(1.0, w * static_cast<double>(t));
    }
    return out;
}

std::vector<cplx> preamble_template(const TelegramSpec& spec) {
    const int sps = checked_sps(spec);
    std::vector<cplx> burst = modulate_burst(preamble_bits(), spec, 0.0);
    // keep only the region the preamble pulses occupy
    burst.resize(static_cast<std::size_t>(spec.preamble_len + spec.pulse_span) *
                 static_cast<std::size_t>(sps));
    return burst;
}

BurstSchedule plan_hops(const TelegramSpec& spec) {
    if (spec.n_bursts < 2) throw InvalidSpecError("telegram: n_bursts >= 2 required");
    const int sps = checked_sps(spec);
    if (spec.burst_len % sps != 0)
        throw InvalidSpecError("telegram: burst_len must be a multiple of samples-per-symbol");

    std::vector<double> slots =
        spec.freq_slots.empty() ? TelegramSpec::default_freq_slots() : spec.freq_slots;
    for (double f : slots)
        if (std::abs(f) > kBandwidth / 2.0)
            throw InvalidSpecError("telegram: frequency slot outside +-B/2");

    const int n_sym = spec.burst_len / sps - spec.pulse_span;
    const int data_per_burst = n_sym - spec.preamble_len - spec.postamble_len;
    if (data_per_burst < 1)
        throw InvalidSpecError("telegram: burst_len too short for preamble/postamble");

    const std::int64_t span = static_cast<std::int64_t>(
        std::llround(static_cast<double>(spec.n_bursts) * spec.burst_len *
                     spec.time_span_factor));
    const std::int64_t max_start = span - spec.burst_len;
    if (max_start < 0) throw InvalidSpecError("telegram: time_span_factor < 1");

    // Bursts collide when they overlap in time and sit closer in
    // frequency than one occupied bandwidth. Redraw the offending
    // burst up to 100 times, deterministically.
    const double min_freq_sep = spec.symbol_rate * (1.0 + spec.rolloff);
    std::mt19937_64 hop_rng = rng::stream(spec.hop_pattern_seed, "telegram-hop");
    std::uniform_int_distribution<std::int64_t> start_dist(0, max_start);
    std::uniform_int_distribution<std::size_t> slot_dist(0, slots.size() - 1);

    BurstSchedule sched;
    sched.sps = sps;
    sched.span_samples = span;
    sched.symbols_per_burst = n_sym;
    sched.data_bits_per_burst = data_per_burst;
    for (int b = 0; b < spec.n_bursts; ++b) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            std::int64_t start = start_dist(hop_rng);
            double freq = slots[slot_dist(hop_rng)];
            bool collides = false;
            for (const auto& prev : sched.bursts) {
                bool time_overlap = start < prev.start_sample + spec.burst_len &&
                                    prev.start_sample < start + spec.burst_len;
                if (time_overlap && std::abs(freq - prev.freq_hz) < min_freq_sep) {
                    collides = true;
                    break;
                }
            }
            if (!collides) {
                sched.bursts.push_back({start, freq, b * data_per_burst, data_per_burst});
                placed = true;
            }
        }
        if (!placed)
            throw SlotCollisionError("telegram: could not place burst " + std::to_string(b) +
                                     " without collision after 100 attempts");
    }
    return sched;
}

std::pair<BasebandSignal, BurstSchedule> gen_telegram(const TelegramSpec& spec) {
    if (spec.payload.empty() || spec.payload.size() > 255)
        throw InvalidSpecError("telegram: payload must be 1..255 bytes");
    BurstSchedule sched = plan_hops(spec);
    const int n_sym = sched.symbols_per_burst;
    const int data_per_burst = sched.data_bits_per_burst;

    std::vector<std::uint8_t> bits = telegram_bits(spec);
    const std::size_t capacity =
        static_cast<std::size_t>(spec.n_bursts) * static_cast<std::size_t>(data_per_burst);
    if (bits.size() > capacity)
        throw InvalidSpecError("telegram: payload does not fit the burst budget");
    std::mt19937_64 fill_rng = rng::stream(spec.hop_pattern_seed, "telegram-fill");
    while (bits.size() < capacity)
        bits.push_back(static_cast<std::uint8_t>(fill_rng() & 1));

    const std::int64_t span = sched.span_samples;
    BasebandSignal sig;
    sig.sample_rate = spec.sample_rate;
    sig.samples.assign(static_cast<std::size_t>(span), cplx{0.0, 0.0});
    for (const auto& bp : sched.bursts) {
        std::vector<int> sym_bits;
        sym_bits.reserve(static_cast<std::size_t>(n_sym));
        sym_bits.insert(sym_bits.end(), preamble_bits().begin(), preamble_bits().end());
        for (int i = 0; i < bp.n_bits; ++i)
            sym_bits.push_back(bits[static_cast<std::size_t>(bp.first_bit + i)]);
        sym_bits.insert(sym_bits.end(), postamble_bits().begin(), postamble_bits().end());
        std::vector<cplx> burst = modulate_burst(sym_bits, spec, bp.freq_hz);
        for (std::size_t i = 0; i < burst.size(); ++i)
            sig.samples[static_cast<std::size_t>(bp.start_sample) + i] += burst[i];
    }

    // normalize mean power over burst supports to 1
    double energy = 0.0;
    std::int64_t support = 0;
    for (const auto& bp : sched.bursts) {
        for (std::int64_t i = bp.start_sample; i < bp.start_sample + spec.burst_len; ++i)
            energy += std::norm(sig.samples[static_cast<std::size_t>(i)]);
        support += spec.burst_len;
    }
    if (energy <= 0.0) throw InvalidSpecError("telegram: degenerate zero-energy signal");
    double scale = std::sqrt(static_cast<double>(support) / energy);
    for (auto& s : sig.samples) s *= scale;

    return {std::move(sig), std::move(sched)};
}

BasebandSignal gen_soo(const SooSpec& spec, double duration) {
    if (spec.n_fft < 2 || (spec.n_fft & (spec.n_fft - 1)) != 0)
        throw InvalidSpecError("soo: n_fft must be a power of two >= 2");
    if (spec.n_active_carriers < 1 || spec.n_active_carriers > spec.n_fft)
        throw InvalidSpecError("soo: n_active_carriers out of range");
    if (spec.cp_len < 0 || spec.cp_len >= spec.n_fft)
        throw InvalidSpecError("soo: cp_len out of range");
    if (spec.sample_rate <= 0.0) throw InvalidSpecError("soo: sample_rate must be positive");
    double occupied = static_cast<double>(spec.n_active_carriers) * spec.sample_rate /
                      static_cast<double>(spec.n_fft);
    if (occupied > kBandwidth + 1e-6)
        throw InvalidSpecError("soo: occupied bandwidth exceeds 1.536 MHz");
    const int sym_len = spec.n_fft + spec.cp_len;
    if (duration * spec.sample_rate < static_cast<double>(spec.n_fft) - 1e-9)
        throw InvalidSpecError("soo: duration shorter than one OFDM symbol");

    const std::size_t n_sym = static_cast<std::size_t>(
        std::ceil(duration * spec.sample_rate / sym_len - 1e-12));

    // QPSK amplitude chosen so E|x[n]|^2 = 1 after the unscaled
    // inverse FFT (power n_active * A^2 / n_fft^2).
    const double amp = static_cast<double>(spec.n_fft) /
                       std::sqrt(static_cast<double>(spec.n_active_carriers));
    const double coeff = amp / std::sqrt(2.0);

    std::mt19937_64 gen = rng::stream(spec.constellation_seed, "soo-qpsk");
    BasebandSignal sig;
    sig.sample_rate = spec.sample_rate;
    sig.samples.reserve(n_sym * static_cast<std::size_t>(sym_len));

    const int k_lo = -(spec.n_active_carriers / 2);
    std::vector<cplx> spectrum(static_cast<std::size_t>(spec.n_fft));
    for (std::size_t s = 0; s < n_sym; ++s) {
        std::fill(spectrum.begin(), spectrum.end(), cplx{0.0, 0.0});
        for (int i = 0; i < spec.n_active_carriers; ++i) {
            int k = k_lo + i;
            std::uint64_t r = gen();
            double re = (r & 1) ? coeff : -coeff;
            double im = (r & 2) ? coeff : -coeff;
            int bin = k >= 0 ? k : k + spec.n_fft;
            spectrum[static_cast<std::size_t>(bin)] = cplx{re, im};
        }
        std::vector<cplx> sym = spectrum;
        fft::transform(sym, true);  // 1/N inverse; amp above accounts for it
        // cyclic prefix then body
        for (int i = spec.n_fft - spec.cp_len; i < spec.n_fft; ++i)
            sig.samples.push_back(sym[static_cast<std::size_t>(i)]);
        sig.samples.insert(sig.samples.end(), sym.begin(), sym.end());
    }
    return sig;
}

std::vector<double> schedule_emitter(double interval, double total) {
    if (interval <= 0.0) throw InvalidSpecError("schedule: interval must be positive");
    if (total < 0.0) throw InvalidSpecError("schedule: total must be non-negative");
    std::vector<double> epochs;
    // total < interval yields the single epoch t = 0
    std::int64_t n = static_cast<std::int64_t>(std::floor(total / interval + 1e-12));
    for (std::int64_t k = 0; k <= n; ++k) epochs.push_back(static_cast<double>(k) * interval);
    return epochs;
}

}  // namespace cran
