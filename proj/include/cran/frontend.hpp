#pragma once

#include <cstdint>
#include <vector>

#include "cran/types.hpp"

namespace cran {

// 16-bit codes cover both resolutions; 8-bit mode stays within +-127.
struct QuantizedBlock {
    Timestamp t0;
    int channel_id = 0;
    int bits = 16;
    double scale = 1.0;          // full-scale amplitude the max code maps to
    double sample_rate = kFres;  // Hz
    std::uint32_t n_samples = 0;
    std::vector<std::int16_t> iq;  // interleaved I,Q

    bool operator==(const QuantizedBlock&) const = default;
};

// One contiguous slice of a block's fftshift-ordered spectrum,
// quantized with its own scale.
struct SubbandSegment {
    Timestamp t0;               // start of the parent time-domain block
    int channel_id = 0;
    int subband_index = 0;
    int n_subbands = 1;
    int fft_len = 0;            // power of two, divisible by n_subbands
    int bits = 16;
    double scale = 1.0;
    double sample_rate = kFres;  // time-domain rate of the parent block
    std::vector<std::int16_t> iq;  // interleaved quantized coefficients

    bool operator==(const SubbandSegment&) const = default;
};

// Fractional resampling to out_rate (ratio limited to [0.5, 2]). The
// interpolator is a 4x Kaiser-windowed polyphase upsampler followed by
// a cubic (4-tap Farrow) polynomial stage; the FIR group delay is
// folded into the fractional index mapping, so t0 carries over exactly
// and the published group-delay correction is zero. Ratio exactly 1
// returns the input verbatim.
BasebandSignal farrow_resample(const BasebandSignal& in, double out_rate);

// Round-to-nearest midrise quantization. scale is the largest |I|,|Q|
// component (1.0 for an all-zero block by convention) mapped onto
// +-(2^(bits-1) - 1).
QuantizedBlock quantize(const BasebandSignal& in, int bits, int channel_id = 0);
BasebandSignal dequantize(const QuantizedBlock& block);

// Core of quantize(): fills `out` with interleaved codes and returns
// the scale. Shared with the transport layer's re-quantization.
double quantize_span(const cplx* src, std::size_t n, int bits,
                     std::vector<std::int16_t>& out);
int quant_full_scale(int bits);  // 127 or 32767

// Rectangular (windowless) FFT per fft_len block, spectrum split into
// n_subbands contiguous fftshift-ordered slices, each quantized
// independently. Signal length must be a whole number of blocks.
std::vector<SubbandSegment> segment_spectrum(const BasebandSignal& in, int n_subbands,
                                             int fft_len, int bits = 16,
                                             int channel_id = 0);

// Inverse of segment_spectrum. Every block must be a complete subband
// set unless allow_partial; then absent subbands are zero-filled and
// the result is the band-limited signal. Throws IncompleteSetError
// (listing missing indices) on a gap in strict mode, DiscontinuityError
// when block timestamps do not abut.
BasebandSignal reassemble(const std::vector<SubbandSegment>& segments,
                          bool allow_partial = false);

// Lossless DEFLATE-family codec, framed as [raw_size u64 LE][zlib
// stream]. decompress throws ChecksumError on any corruption.
std::vector<std::uint8_t> compress_bytes(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> compress_bytes(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> decompress_bytes(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> decompress_bytes(const std::vector<std::uint8_t>& data);

}  // namespace cran
