#include "cran/frontend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <zlib.h>

#include "cran/dsp.hpp"
#include "cran/errors.hpp"
#include "cran/fft.hpp"

namespace cran {

namespace {

// 4x upsampling anti-image filter. Cutoff sits mid-transition between
// the 0.768 MHz signal edge (0.096 of the intermediate rate) and the
// first image at 0.154; 95 taps at beta 8.96 give ~80 dB rejection
// with the passband flat past 0.78 of the input Nyquist.
constexpr int kUpFactor = 4;
constexpr int kFirTaps = 95;
constexpr int kGroupDelay = (kFirTaps - 1) / 2;  // intermediate samples
constexpr int kPhaseTaps = (kFirTaps + kUpFactor - 1) / kUpFactor;

const std::array<std::array<double, kPhaseTaps>, kUpFactor>& polyphase_bank() {
    static const auto bank = [] {
        std::vector<double> h =
            dsp::kaiser_lowpass(kFirTaps, 0.125, 8.96, static_cast<double>(kUpFactor));
        std::array<std::array<double, kPhaseTaps>, kUpFactor> rows{};
        for (int p = 0; p < kUpFactor; ++p)
            for (int k = 0; k < kPhaseTaps; ++k) {
                int j = p + kUpFactor * k;
                rows[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)] =
                    j < kFirTaps ? h[static_cast<std::size_t>(j)] : 0.0;
            }
        return rows;
    }();
    return bank;
}

// Filtered 4x-grid sample at integer intermediate index q >= 0.
inline cplx intermediate_sample(const std::vector<cplx>& x, std::int64_t q) {
    const auto& bank = polyphase_bank();
    const auto& row = bank[static_cast<std::size_t>(q & 3)];
    std::int64_t base = q >> 2;
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    int k_lo = base >= n ? static_cast<int>(base - n + 1) : 0;
    int k_hi = base < kPhaseTaps ? static_cast<int>(base) : kPhaseTaps - 1;
    cplx acc{0.0, 0.0};
    for (int k = k_lo; k <= k_hi; ++k)
        acc += row[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(base - k)];
    return acc;
}

void check_bits(int bits) {
    if (bits != 8 && bits != 16) throw InvalidSpecError("quantize: bits must be 8 or 16");
}

}  // namespace

int quant_full_scale(int bits) { return bits == 8 ? 127 : 32767; }

double quantize_span(const cplx* src, std::size_t n, int bits,
                     std::vector<std::int16_t>& out) {
    check_bits(bits);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        peak = std::max(peak, std::abs(src[i].real()));
        peak = std::max(peak, std::abs(src[i].imag()));
    }
    double scale = peak > 0.0 ? peak : 1.0;
    const double gain = quant_full_scale(bits) / scale;
    out.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = static_cast<std::int16_t>(std::lrint(src[i].real() * gain));
        out[2 * i + 1] = static_cast<std::int16_t>(std::lrint(src[i].imag() * gain));
    }
    return scale;
}

BasebandSignal farrow_resample(const BasebandSignal& in, double out_rate) {
    if (in.sample_rate <= 0.0 || out_rate <= 0.0)
        throw InvalidSpecError("resample: rates must be positive");
    const double ratio = out_rate / in.sample_rate;
    if (ratio < 0.5 - 1e-12 || ratio > 2.0 + 1e-12)
        throw InvalidSpecError("resample: ratio outside [0.5, 2]");

    BasebandSignal out;
    out.sample_rate = out_rate;
    out.t0 = in.t0;
    if (in.samples.empty()) return out;
    if (ratio == 1.0) {
        out.samples = in.samples;
        return out;
    }

    // Last output still maps inside the input span; the epsilon absorbs
    // rounding when (n_in-1)*ratio is an exact integer.
    const std::size_t n_in = in.samples.size();
    const std::size_t n_out = static_cast<std::size_t>(std::floor(
                                  static_cast<double>(n_in - 1) * ratio + 1e-6)) +
                              1;
    out.samples.resize(n_out);

    const double inv_ratio = 1.0 / ratio;
    for (std::size_t m = 0; m < n_out; ++m) {
        const double u = static_cast<double>(m) * inv_ratio;
        // Evaluate the 4x grid at q = 4u + group_delay so the FIR
        // delay cancels and output m lands exactly on input time u.
        const double qf = static_cast<double>(kUpFactor) * u + kGroupDelay;
        const std::int64_t qi = static_cast<std::int64_t>(std::floor(qf));
        const double mu = qf - static_cast<double>(qi);

        const cplx ym1 = intermediate_sample(in.samples, qi - 1);
        const cplx y0 = intermediate_sample(in.samples, qi);
        const cplx y1 = intermediate_sample(in.samples, qi + 1);
        const cplx y2 = intermediate_sample(in.samples, qi + 2);

        // cubic Lagrange basis on nodes {-1, 0, 1, 2} at mu
        const double cm1 = -mu * (mu - 1.0) * (mu - 2.0) / 6.0;
        const double c0 = (mu + 1.0) * (mu - 1.0) * (mu - 2.0) / 2.0;
        const double c1 = -(mu + 1.0) * mu * (mu - 2.0) / 2.0;
        const double c2 = (mu + 1.0) * mu * (mu - 1.0) / 6.0;
        out.samples[m] = cm1 * ym1 + c0 * y0 + c1 * y1 + c2 * y2;
    }
    return out;
}

QuantizedBlock quantize(const BasebandSignal& in, int bits, int channel_id) {
    check_bits(bits);
    if (in.samples.empty()) throw InvalidSpecError("quantize: empty block");
    QuantizedBlock qb;
    qb.t0 = in.t0;
    qb.channel_id = channel_id;
    qb.bits = bits;
    qb.sample_rate = in.sample_rate;
    qb.n_samples = static_cast<std::uint32_t>(in.samples.size());
    qb.scale = quantize_span(in.samples.data(), in.samples.size(), bits, qb.iq);
    return qb;
}

BasebandSignal dequantize(const QuantizedBlock& block) {
    check_bits(block.bits);
    if (block.iq.size() != 2 * static_cast<std::size_t>(block.n_samples))
        throw InvalidSpecError("dequantize: payload length mismatch");
    BasebandSignal out;
    out.t0 = block.t0;
    out.sample_rate = block.sample_rate;
    out.samples.resize(block.n_samples);
    const double step = block.scale / quant_full_scale(block.bits);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = cplx{block.iq[2 * i] * step, block.iq[2 * i + 1] * step};
    return out;
}

std::vector<SubbandSegment> segment_spectrum(const BasebandSignal& in, int n_subbands,
                                             int fft_len, int bits, int channel_id) {
    check_bits(bits);
    if (fft_len < 2 || (fft_len & (fft_len - 1)) != 0)
        throw InvalidSpecError("segment: fft_len must be a power of two");
    if (n_subbands < 1 || fft_len % n_subbands != 0)
        throw InvalidSpecError("segment: n_subbands must divide fft_len");
    if (in.samples.empty() || in.samples.size() % static_cast<std::size_t>(fft_len) != 0)
        throw InvalidSpecError("segment: signal length must be a whole number of blocks");

    const std::size_t n_blocks = in.samples.size() / static_cast<std::size_t>(fft_len);
    const int width = fft_len / n_subbands;
    std::vector<SubbandSegment> segments;
    segments.reserve(n_blocks * static_cast<std::size_t>(n_subbands));

    std::vector<cplx> spec(static_cast<std::size_t>(fft_len));
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const cplx* src = in.samples.data() + b * static_cast<std::size_t>(fft_len);
        spec.assign(src, src + fft_len);
        fft::transform(spec, false);
        spec = fft::fftshift(spec);
        for (int s = 0; s < n_subbands; ++s) {
            SubbandSegment seg;
            seg.t0 = in.time_of_sample(static_cast<std::int64_t>(b) * fft_len);
            seg.channel_id = channel_id;
            seg.subband_index = s;
            seg.n_subbands = n_subbands;
            seg.fft_len = fft_len;
            seg.bits = bits;
            seg.sample_rate = in.sample_rate;
            seg.scale = quantize_span(spec.data() + static_cast<std::size_t>(s) * width,
                                      static_cast<std::size_t>(width), bits, seg.iq);
            segments.push_back(std::move(seg));
        }
    }
    return segments;
}

BasebandSignal reassemble(const std::vector<SubbandSegment>& segments, bool allow_partial) {
    if (segments.empty()) throw InvalidSpecError("reassemble: no segments");
    const SubbandSegment& first = segments.front();
    for (const auto& s : segments) {
        if (s.fft_len != first.fft_len || s.n_subbands != first.n_subbands ||
            s.sample_rate != first.sample_rate || s.channel_id != first.channel_id)
            throw InvalidSpecError("reassemble: segments from mismatched configurations");
        if (s.subband_index < 0 || s.subband_index >= s.n_subbands)
            throw InvalidSpecError("reassemble: subband index out of range");
    }

    const int fft_len = first.fft_len;
    const int n_sub = first.n_subbands;
    const int width = fft_len / n_sub;

    std::map<Timestamp, std::vector<const SubbandSegment*>> blocks;
    for (const auto& s : segments) {
        auto& set = blocks[s.t0];
        set.resize(static_cast<std::size_t>(n_sub), nullptr);
        set[static_cast<std::size_t>(s.subband_index)] = &s;
    }

    BasebandSignal out;
    out.sample_rate = first.sample_rate;
    out.t0 = blocks.begin()->first;
    out.samples.reserve(blocks.size() * static_cast<std::size_t>(fft_len));

    const double block_dt = fft_len / first.sample_rate;
    Timestamp expected = out.t0;
    std::vector<cplx> spec(static_cast<std::size_t>(fft_len));
    for (const auto& [ts, set] : blocks) {
        if (std::abs(ts.diff_seconds(expected)) > 0.5 / first.sample_rate)
            throw DiscontinuityError("reassemble: non-contiguous block timestamps");
        std::vector<int> missing;
        for (int s = 0; s < n_sub; ++s)
            if (!set[static_cast<std::size_t>(s)]) missing.push_back(s);
        if (!missing.empty() && !allow_partial)
            throw IncompleteSetError("reassemble", missing);

        std::fill(spec.begin(), spec.end(), cplx{0.0, 0.0});
        for (int s = 0; s < n_sub; ++s) {
            const SubbandSegment* seg = set[static_cast<std::size_t>(s)];
            if (!seg) continue;
            if (seg->iq.size() != 2 * static_cast<std::size_t>(width))
                throw InvalidSpecError("reassemble: segment payload length mismatch");
            const double step = seg->scale / quant_full_scale(seg->bits);
            for (int i = 0; i < width; ++i)
                spec[static_cast<std::size_t>(s * width + i)] =
                    cplx{seg->iq[2 * static_cast<std::size_t>(i)] * step,
                         seg->iq[2 * static_cast<std::size_t>(i) + 1] * step};
        }
        spec = fft::ifftshift(spec);
        fft::transform(spec, true);
        out.samples.insert(out.samples.end(), spec.begin(), spec.end());
        expected = expected.advanced_seconds(block_dt);
    }
    return out;
}

std::vector<std::uint8_t> compress_bytes(const std::uint8_t* data, std::size_t n) {
    uLongf bound = compressBound(static_cast<uLong>(n));
    std::vector<std::uint8_t> out(8 + bound);
    for (int i = 0; i < 8; ++i)
        out[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF);
    static const std::uint8_t kEmpty = 0;
    const std::uint8_t* src = n > 0 ? data : &kEmpty;
    int rc = compress2(out.data() + 8, &bound, src, static_cast<uLong>(n), 6);
    if (rc != Z_OK) throw TransportError("compress: deflate failed");
    out.resize(8 + bound);
    return out;
}

std::vector<std::uint8_t> compress_bytes(const std::vector<std::uint8_t>& data) {
    return compress_bytes(data.data(), data.size());
}

std::vector<std::uint8_t> decompress_bytes(const std::uint8_t* data, std::size_t n) {
    if (n < 8) throw ChecksumError("decompress: truncated frame");
    std::uint64_t raw_size = 0;
    for (int i = 0; i < 8; ++i)
        raw_size |= static_cast<std::uint64_t>(data[static_cast<std::size_t>(i)]) << (8 * i);
    if (raw_size > (1ull << 32))
        throw ChecksumError("decompress: implausible declared size");
    std::vector<std::uint8_t> out(std::max<std::size_t>(raw_size, 1));
    uLongf dest_len = static_cast<uLongf>(raw_size);
    int rc = uncompress(out.data(), &dest_len, data + 8, static_cast<uLong>(n - 8));
    if (rc != Z_OK || dest_len != raw_size)
        throw ChecksumError("decompress: corrupt stream");
    out.resize(raw_size);
    return out;
}

std::vector<std::uint8_t> decompress_bytes(const std::vector<std::uint8_t>& data) {
    return decompress_bytes(data.data(), data.size());
}

}  // namespace cran
