#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cran/types.hpp"

namespace cran {

// Nominal system bandwidth, Hz. Frequency slots and the SoO occupied
// band stay within +-kBandwidth/2 of baseband center.
inline constexpr double kBandwidth = 1.536e6;

// Telegram-splitting burst waveform parameters. A telegram is split
// into n_bursts pi/2-BPSK bursts hopped pseudo-randomly in time and
// frequency; the hop pattern is a pure function of hop_pattern_seed.
struct TelegramSpec {
    std::vector<std::uint8_t> payload;   // 1..255 bytes
    int n_bursts = 24;
    int burst_len = 16384;               // samples per burst incl. pulse tails
    std::uint64_t hop_pattern_seed = 1;
    double symbol_rate = 3906.25;        // Hz; sample_rate/symbol_rate must be integer
    std::vector<double> freq_slots;      // baseband center offsets, Hz

    double sample_rate = 2.0e6;          // Hz
    double rolloff = 0.25;               // RRC roll-off
    int pulse_span = 8;                  // RRC span, symbols
    int preamble_len = 8;                // known symbols at burst head
    int postamble_len = 8;               // known symbols at burst tail
    double time_span_factor = 1.5;       // telegram span / total burst time

    // 48 slots spread uniformly across +-700 kHz.
    static std::vector<double> default_freq_slots();
};

struct BurstPlacement {
    std::int64_t start_sample = 0;  // first sample of the burst within the telegram
    double freq_hz = 0.0;           // slot center offset
    int first_bit = 0;              // index into the telegram bit string
    int n_bits = 0;                 // data bits carried by this burst
};

// Ground-truth schedule returned with the generated telegram.
struct BurstSchedule {
    std::vector<BurstPlacement> bursts;
    std::int64_t span_samples = 0;  // placement window length
    int sps = 0;                    // samples per symbol
    int symbols_per_burst = 0;      // preamble + data + postamble
    int data_bits_per_burst = 0;
};

// OFDM Signal-of-Opportunity surrogate: pseudo-random QPSK carriers,
// cyclic prefix, flat occupied spectrum.
struct SooSpec {
    int n_fft = 2048;
    int n_active_carriers = 1500;
    int cp_len = 256;  // n_fft/8
    std::uint64_t constellation_seed = 1;
    double sample_rate = 2.0e6;  // Hz
};

// Generates the baseband telegram (t0 = 0; callers stamp epoch time)
// plus the exact burst schedule. Mean power over burst supports is 1.
// Throws InvalidSpecError / SlotCollisionError.
std::pair<BasebandSignal, BurstSchedule> gen_telegram(const TelegramSpec& spec);

// Burst time/frequency placement alone; a pure function of the
// TelegramSpec (payload excluded), so receivers reconstruct the hop
// pattern from the parameters they were configured with.
BurstSchedule plan_hops(const TelegramSpec& spec);

// The encoded bit string a telegram carries: [len u8 | payload |
// crc16-ccitt], tail-padded with seeded PN bits to fill all bursts.
std::vector<std::uint8_t> telegram_bits(const TelegramSpec& spec);

// Clean single-burst waveform at slot frequency 0 with only the
// preamble modulated (data/postamble suppressed); used as the
// detection/timing template. Length (preamble_len + pulse_span) * sps.
std::vector<cplx> preamble_template(const TelegramSpec& spec);

// Full-rate modulated burst for arbitrary symbol content; exposed for
// oracle tests. Symbols rotate by pi/2 per index before pulse shaping.
std::vector<cplx> modulate_burst(const std::vector<int>& bits_pre_data_post,
                                 const TelegramSpec& spec, double freq_hz);

// Known preamble/postamble bit patterns (shared with the decoder).
const std::vector<int>& preamble_bits();
const std::vector<int>& postamble_bits();

// Continuous OFDM stream covering at least `duration` seconds (whole
// symbols; duration rounds up to the next symbol boundary).
BasebandSignal gen_soo(const SooSpec& spec, double duration);

// Transmit epochs at k*interval for k = 0..floor(total/interval).
// total < interval yields the single epoch t = 0.
std::vector<double> schedule_emitter(double interval, double total);

}  // namespace cran
