#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cran/frontend.hpp"
#include "cran/types.hpp"

namespace cran {

// Station-side retention buffer: one writer appends strictly
// increasing immutable blocks per channel; readers take snapshots.
// Oldest blocks are evicted once the retained span exceeds capacity.
class RingStore {
public:
    RingStore(double capacity_s, int n_channels = 2);

    void store_block(int channel_id, QuantizedBlock block);

    struct Range {
        Timestamp begin;
        Timestamp end;
        bool valid = false;
    };
    Range retained_range(int channel_id) const;

    struct Snapshot {
        std::vector<std::shared_ptr<const QuantizedBlock>> blocks;
        bool any_evicted = false;
        Timestamp evicted_until;  // end of the newest evicted block
    };
    Snapshot snapshot(int channel_id) const;

    int n_channels() const { return static_cast<int>(chans_.size()); }

private:
    void check_channel(int channel_id) const;

    double capacity_s_;
    mutable std::shared_mutex mu_;
    std::vector<std::deque<std::shared_ptr<const QuantizedBlock>>> chans_;
    std::vector<bool> evicted_any_;
    std::vector<Timestamp> evicted_until_;
};

struct IqRequest {
    std::int64_t t0_ns = 0;
    int duration_ms = 0;  // >= 1
    int channel_id = 0;   // 0 | 1
    std::optional<int> subband;
    int bits = 16;
};

// Binary response. Header is 32 bytes, little-endian:
//   0  magic "CRIQ"
//   4  version u8 (=1)
//   5  flags u8: bit0 compressed, bit1 subband mode, bit2 partial
//   6  channel u8
//   7  bits u8
//   8  sample_rate u32 (Hz)
//  12  t0 u64 (epoch ns)
//  20  frac_t0 f32 (fractional ns)
//  24  n_samples u32 (samples, or subband coefficients)
//  28  scale f32
//  32  payload: interleaved signed LE I/Q ints (i8 or i16), possibly
//      wrapped by the compress_bytes framing when bit0 is set.
struct IqResponseFrame {
    std::uint8_t version = 1;
    std::uint8_t flags = 0;
    std::uint8_t channel = 0;
    std::uint8_t bits = 16;
    std::uint32_t sample_rate = 0;
    std::uint64_t t0_ns = 0;
    float frac_t0 = 0.0f;
    std::uint32_t n_samples = 0;
    float scale = 1.0f;
    std::vector<std::uint8_t> payload;

    bool operator==(const IqResponseFrame&) const = default;
};

inline constexpr std::uint8_t kFlagCompressed = 0x01;
inline constexpr std::uint8_t kFlagSubband = 0x02;
inline constexpr std::uint8_t kFlagPartial = 0x04;

std::vector<std::uint8_t> encode_frame(const IqResponseFrame& frame);
// Throws FramingError on bad magic/version/truncation.
IqResponseFrame decode_frame(const std::uint8_t* data, std::size_t n);
IqResponseFrame decode_frame(const std::vector<std::uint8_t>& data);

// Payload decoding. frame_to_signal handles sample-mode frames;
// frame_to_segments splits a subband-mode frame into per-block
// segments (needs the segmentation geometry, which travels out of
// band via /status or shared config).
BasebandSignal frame_to_signal(const IqResponseFrame& frame);
std::vector<SubbandSegment> frame_to_segments(const IqResponseFrame& frame, int fft_len,
                                              int n_subbands, int subband_index);

// Stateless per-request view of one station's store.
struct IqService {
    const RingStore* store = nullptr;
    int station_id = 0;
    double sample_rate = kFres;
    int fft_len = 16384;
    int n_subbands = 8;
    bool compress = true;
};

// status + body; body is a frame (application/octet-stream) on
// 200/416 and a JSON object {code, message, available_range} on error.
struct RawResponse {
    int status = 0;
    std::vector<std::uint8_t> body;
    std::string content_type;
};

RawResponse handle_request(const IqService& svc, const IqRequest& req);
std::string status_json(const IqService& svc);

// Transport abstraction the aggregator fetches through; LocalEndpoint
// short-circuits in process (still exercising the full wire encoding),
// HttpIqEndpoint talks to a StationServer over real sockets.
class IqEndpoint {
public:
    virtual ~IqEndpoint() = default;
    virtual RawResponse get_iq(const IqRequest& req) = 0;
    virtual std::string get_status() = 0;
};

class LocalEndpoint : public IqEndpoint {
public:
    explicit LocalEndpoint(IqService svc) : svc_(svc) {}
    RawResponse get_iq(const IqRequest& req) override { return handle_request(svc_, req); }
    std::string get_status() override { return status_json(svc_); }

private:
    IqService svc_;
};

class HttpIqEndpoint : public IqEndpoint {
public:
    HttpIqEndpoint(const std::string& host, int port);
    ~HttpIqEndpoint() override;
    RawResponse get_iq(const IqRequest& req) override;
    std::string get_status() override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Blocking HTTP server exposing GET /iq and GET /status for one
// station. start() throws TransportError when the port is taken.
class StationServer {
public:
    StationServer(IqService svc, int port);
    ~StationServer();
    void start();
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct FetchOptions {
    int bits = 16;
    std::optional<int> subband;
    int fft_len = 16384;    // subband mode: geometry for reassembly
    int n_subbands = 8;
    int max_attempts = 10;
    double backoff_base_ms = 100.0;
    double backoff_cap_ms = 2000.0;
    // Injectable for tests; default really sleeps.
    std::function<void(double ms)> sleeper;
};

// Chunked client fetch: splits the span into <= 1 s requests, retries
// 404 with exponential backoff, accepts 416 prefixes and continues,
// verifies every chunk abuts the previous one, and returns one
// contiguous signal (band-limited reconstruction in subband mode).
// Throws RetriesExhaustedError / EvictedRangeError / DiscontinuityError
// / TransportError.
BasebandSignal fetch_iq(IqEndpoint& endpoint, Timestamp t0, double duration_s,
                        int channel_id, const FetchOptions& opt = {});

}  // namespace cran
