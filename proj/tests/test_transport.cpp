#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <json.hpp>

#include "cran/errors.hpp"
#include "cran/fft.hpp"
#include "cran/frontend.hpp"
#include "cran/transport.hpp"

using namespace cran;

namespace {

// deterministic bounded test signal on an arbitrary grid
BasebandSignal ramp_signal(Timestamp t0, double rate, std::size_t n, std::uint64_t seed) {
    BasebandSignal s;
    s.t0 = t0;
    s.sample_rate = rate;
    s.samples.resize(n);
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (auto& v : s.samples) v = {u(g), u(g)};
    return s;
}

struct Fixture {
    double rate = 8192.0;
    int fft_len = 512;
    int n_sub = 4;
    RingStore ring{10.0, 2};
    std::vector<BasebandSignal> raw;  // the stored truth, per block
    IqService svc;

    explicit Fixture(int n_blocks = 6, bool compress = true) {
        Timestamp t = Timestamp::from_seconds(1.0);
        for (int i = 0; i < n_blocks; ++i) {
            auto sig = ramp_signal(t, rate, std::size_t(fft_len), 100 + std::uint64_t(i));
            ring.store_block(0, quantize(sig, 16, 0));
            raw.push_back(sig);
            t = t.advanced_samples(fft_len, rate);
        }
        svc = IqService{&ring, 3, rate, fft_len, n_sub, compress};
    }

    // truth samples over [i0, i0+n) counted from the first block
    std::vector<cplx> truth(std::size_t i0, std::size_t n) const {
        std::vector<cplx> all;
        for (const auto& b : raw) all.insert(all.end(), b.samples.begin(), b.samples.end());
        return {all.begin() + std::ptrdiff_t(i0), all.begin() + std::ptrdiff_t(i0 + n)};
    }
};

}  // namespace

TEST_CASE("ring store retention and eviction") {
    RingStore ring(0.002, 1);  // keeps ~2 ms
    const double rate = 1.0e6;
    Timestamp t = Timestamp{0, 0.0};
    for (int i = 0; i < 8; ++i) {
        auto sig = ramp_signal(t, rate, 1000, std::uint64_t(i));  // 1 ms each
        ring.store_block(0, quantize(sig, 16));
        t = t.advanced_samples(1000, rate);
    }
    auto range = ring.retained_range(0);
    REQUIRE(range.valid);
    CHECK(range.end.ns == 8000000);
    CHECK(range.begin.ns > 0);  // front evicted
    auto snap = ring.snapshot(0);
    CHECK(snap.any_evicted);
    CHECK(snap.evicted_until.ns == range.begin.ns);
    CHECK(snap.blocks.size() < 8);

    // Readers holding a snapshot keep their blocks alive across later eviction.
    auto keep = snap.blocks.front();
    for (int i = 0; i < 4; ++i) {
        auto sig = ramp_signal(t, rate, 1000, 50 + std::uint64_t(i));
        ring.store_block(0, quantize(sig, 16));
        t = t.advanced_samples(1000, rate);
    }
    CHECK(keep->n_samples == 1000);
}

TEST_CASE("ring store rejects out-of-order and bad channels") {
    RingStore ring(1.0, 2);
    auto sig = ramp_signal(Timestamp::from_seconds(2.0), 1e6, 100, 9);
    ring.store_block(1, quantize(sig, 16, 1));
    CHECK_THROWS_AS(ring.store_block(1, quantize(sig, 16, 1)), OutOfOrderError);
    CHECK_THROWS_AS(ring.store_block(7, quantize(sig, 16)), InvalidSpecError);
    CHECK_THROWS_AS(ring.retained_range(-1), InvalidSpecError);
    CHECK_FALSE(ring.retained_range(0).valid);  // channel 0 never written
}

TEST_CASE("wire frame encode/decode round trip, randomized") {
    std::mt19937_64 g(64);
    for (int trial = 0; trial < 1000; ++trial) {
        IqResponseFrame f;
        f.flags = std::uint8_t(g() & 0x07);
        f.channel = std::uint8_t(g() & 0x01);
        f.bits = (g() & 1) ? 16 : 8;
        f.sample_rate = std::uint32_t(1000 + g() % 4000000);
        f.t0_ns = g() % (std::uint64_t(1) << 60);
        f.frac_t0 = float(double(g() % 1000) / 1000.0);
        f.n_samples = std::uint32_t(g() % 5000);
        f.scale = float(1e-6 + double(g() % 100000) / 777.0);
        f.payload.resize(g() % 2048);
        for (auto& b : f.payload) b = std::uint8_t(g() & 0xFF);
        auto wire = encode_frame(f);
        REQUIRE(wire.size() == 32 + f.payload.size());
        auto back = decode_frame(wire);
        CHECK(back == f);
    }
}

TEST_CASE("decode_frame rejects malformed input") {
    IqResponseFrame f;
    f.n_samples = 4;
    f.payload.assign(16, 0);
    auto wire = encode_frame(f);

    auto bad_magic = wire;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_frame(bad_magic), FramingError);

    auto bad_version = wire;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_frame(bad_version), FramingError);

    std::vector<std::uint8_t> shorty(wire.begin(), wire.begin() + 20);
    CHECK_THROWS_AS(decode_frame(shorty), FramingError);
}

TEST_CASE("frame/payload mode guards") {
    IqResponseFrame sample_frame;
    sample_frame.flags = kFlagSubband;
    CHECK_THROWS_AS(frame_to_signal(sample_frame), InvalidSpecError);
    IqResponseFrame sub_frame;
    sub_frame.flags = 0;
    CHECK_THROWS_AS(frame_to_segments(sub_frame, 512, 4, 0), InvalidSpecError);
}

TEST_CASE("iq service: full request round trip") {
    Fixture fx;
    IqRequest req;
    req.t0_ns = Timestamp::from_seconds(1.0).ns;
    req.duration_ms = 100;  // 819.2 samples -> 819
    auto resp = handle_request(fx.svc, req);
    REQUIRE(resp.status == 200);
    CHECK(resp.content_type == "application/octet-stream");
    auto frame = decode_frame(resp.body);
    CHECK((frame.flags & kFlagCompressed) != 0);
    CHECK((frame.flags & kFlagPartial) == 0);
    auto sig = frame_to_signal(frame);
    REQUIRE(sig.samples.size() == 819);
    CHECK(sig.t0.ns == req.t0_ns);
    auto want = fx.truth(0, sig.samples.size());
    // two quantization passes at 16 bits
    const double tol = 2.5 * frame.scale / 32767.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(std::abs(sig.samples[i].real() - want[i].real()) <= tol);
        CHECK(std::abs(sig.samples[i].imag() - want[i].imag()) <= tol);
    }
}

TEST_CASE("iq service: request offset into a block snaps to the sample grid") {
    Fixture fx;
    // 3.5 samples past the range start: floor() lands on sample 3
    const double off_s = 3.5 / fx.rate;
    Timestamp t = Timestamp::from_seconds(1.0 + off_s);
    IqRequest req;
    req.t0_ns = t.ns;
    req.duration_ms = 10;
    auto resp = handle_request(fx.svc, req);
    REQUIRE(resp.status == 200);
    auto sig = frame_to_signal(decode_frame(resp.body));
    auto want = fx.truth(3, sig.samples.size());
    const double tol = 2.5 * decode_frame(resp.body).scale / 32767.0;
    CHECK(std::abs(sig.samples[0] - want[0]) <= tol);
    // returned t0 is the grid time of sample 3
    Timestamp expect = Timestamp::from_seconds(1.0).advanced_samples(3, fx.rate);
    CHECK(std::abs(sig.t0.diff_seconds(expect)) < 0.01 / fx.rate);
}

TEST_CASE("iq service: 8-bit requests shrink the payload") {
    Fixture fx(6, false);
    IqRequest req;
    req.t0_ns = Timestamp::from_seconds(1.0).ns;
    req.duration_ms = 50;
    req.bits = 8;
    auto resp = handle_request(fx.svc, req);
    REQUIRE(resp.status == 200);
    auto frame = decode_frame(resp.body);
    CHECK(frame.bits == 8);
    CHECK(frame.payload.size() == 2 * frame.n_samples);  // i8 pairs
    auto sig = frame_to_signal(frame);
    auto want = fx.truth(0, sig.samples.size());
    const double tol = frame.scale / 127.0;  // 8-bit step dominates
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(std::abs(sig.samples[i] - want[i]) <= 1.2 * tol);
}

TEST_CASE("iq service: error statuses") {
    Fixture fx;
    auto req_at = [&](double t_s, int dur_ms = 10) {
        IqRequest r;
        r.t0_ns = Timestamp::from_seconds(t_s).ns;
        r.duration_ms = dur_ms;
        return r;
    };
    auto body_json = [](const RawResponse& r) {
        return nlohmann::json::parse(std::string(r.body.begin(), r.body.end()));
    };

    // not yet captured: beyond the stored run
    auto late = handle_request(fx.svc, req_at(50.0));
    CHECK(late.status == 404);
    CHECK(late.content_type == "application/json");
    auto j = body_json(late);
    CHECK(j["code"] == 404);
    CHECK(j["available_range"].is_array());

    // before the first block
    CHECK(handle_request(fx.svc, req_at(0.5)).status == 404);

    // malformed parameters
    IqRequest bad = req_at(1.0);
    bad.channel_id = 5;
    CHECK(handle_request(fx.svc, bad).status == 400);
    bad = req_at(1.0);
    bad.duration_ms = 0;
    CHECK(handle_request(fx.svc, bad).status == 400);
    bad = req_at(1.0);
    bad.bits = 12;
    CHECK(handle_request(fx.svc, bad).status == 400);
    bad = req_at(1.0);
    bad.subband = 4;  // n_subbands is 4, valid indices 0..3
    CHECK(handle_request(fx.svc, bad).status == 400);

    // empty channel
    bad = req_at(1.0);
    bad.channel_id = 1;
    CHECK(handle_request(fx.svc, bad).status == 404);
}

TEST_CASE("iq service: gap in the capture run") {
    RingStore ring(10.0, 1);
    const double rate = 8192.0;
    Timestamp t = Timestamp::from_seconds(1.0);
    auto a = ramp_signal(t, rate, 512, 1);
    ring.store_block(0, quantize(a, 16));
    Timestamp t2 = t.advanced_samples(2048, rate);  // 3 blocks missing
    auto b = ramp_signal(t2, rate, 512, 2);
    ring.store_block(0, quantize(b, 16));
    IqService svc{&ring, 0, rate, 512, 4, false};

    // request starting inside the hole
    IqRequest req;
    req.t0_ns = t.advanced_samples(1024, rate).ns;
    req.duration_ms = 10;
    CHECK(handle_request(svc, req).status == 404);

    // request overlapping the hole returns the prefix and flags partial
    req.t0_ns = t.ns;
    req.duration_ms = 200;  // wants 1638 samples, only 512 contiguous
    auto resp = handle_request(svc, req);
    REQUIRE(resp.status == 416);
    auto frame = decode_frame(resp.body);
    CHECK((frame.flags & kFlagPartial) != 0);
    CHECK(frame.n_samples == 512);
}

TEST_CASE("iq service: eviction watermark yields 410") {
    RingStore ring(0.05, 1);  // 50 ms capacity
    const double rate = 8192.0;
    Timestamp t = Timestamp::from_seconds(1.0);
    for (int i = 0; i < 20; ++i) {  // 512/8192 = 62.5 ms per block
        ring.store_block(0, quantize(ramp_signal(t, rate, 512, std::uint64_t(i)), 16));
        t = t.advanced_samples(512, rate);
    }
    IqService svc{&ring, 0, rate, 512, 4, false};
    IqRequest req;
    req.t0_ns = Timestamp::from_seconds(1.0).ns;
    req.duration_ms = 10;
    CHECK(handle_request(svc, req).status == 410);
}

TEST_CASE("iq service: subband slice matches the direct spectrum") {
    Fixture fx(2, false);
    IqRequest req;
    req.t0_ns = Timestamp::from_seconds(1.0).ns;
    req.duration_ms = int(std::ceil(2 * fx.fft_len / fx.rate * 1000.0));
    req.subband = 1;
    auto resp = handle_request(fx.svc, req);
    REQUIRE(resp.status == 200);
    auto frame = decode_frame(resp.body);
    CHECK((frame.flags & kFlagSubband) != 0);
    const int width = fx.fft_len / fx.n_sub;
    REQUIRE(frame.n_samples == std::uint32_t(2 * width));

    auto segs = frame_to_segments(frame, fx.fft_len, fx.n_sub, 1);
    REQUIRE(segs.size() == 2);
    const double step = frame.scale / 32767.0;
    for (int blk = 0; blk < 2; ++blk) {
        // direct slice of this block's spectrum (from the stored, quantized samples)
        auto stored = dequantize(*fx.ring.snapshot(0).blocks[std::size_t(blk)]);
        auto spec = fft::fftshift(fft::forward(stored.samples));
        const auto& s = segs[std::size_t(blk)];
        CHECK(s.subband_index == 1);
        CHECK(s.t0 == stored.t0);
        const double seg_step = s.scale / 32767.0;
        for (int k = 0; k < width; ++k) {
            cplx got{s.iq[std::size_t(2 * k)] * seg_step, s.iq[std::size_t(2 * k + 1)] * seg_step};
            CHECK(std::abs(got - spec[std::size_t(width + k)]) <= step + seg_step);
        }
    }
}

TEST_CASE("status json reports ranges and geometry") {
    Fixture fx;
    auto j = nlohmann::json::parse(status_json(fx.svc));
    CHECK(j["station_id"] == 3);
    CHECK(j["f_res"] == doctest::Approx(fx.rate));
    CHECK(j["n_subbands"] == fx.n_sub);
    CHECK(j["fft_len"] == fx.fft_len);
    REQUIRE(j["retained_range_per_channel"].contains("0"));
    auto r0 = j["retained_range_per_channel"]["0"];
    REQUIRE(r0.is_array());
    CHECK(r0[0] == Timestamp::from_seconds(1.0).ns);
    CHECK(j["retained_range_per_channel"]["1"].is_null());
}

namespace {

// Endpoint wrapper that forces n 404s before each successful chunk.
class FlakyEndpoint : public IqEndpoint {
public:
    FlakyEndpoint(IqService svc, int fail_per_chunk)
        : inner_(svc), fails_left_(fail_per_chunk), fail_per_chunk_(fail_per_chunk) {}
    RawResponse get_iq(const IqRequest& req) override {
        if (fails_left_ > 0) {
            --fails_left_;
            RawResponse r;
            r.status = 404;
            r.content_type = "application/json";
            return r;
        }
        fails_left_ = fail_per_chunk_;
        return inner_.get_iq(req);
    }
    std::string get_status() override { return inner_.get_status(); }

private:
    LocalEndpoint inner_;
    int fails_left_;
    int fail_per_chunk_;
};

}  // namespace

TEST_CASE("fetch_iq stitches multiple chunks") {
    // 24 blocks of 512 samples at 8192 Hz = 1.5 s retained
    Fixture fx(24);
    LocalEndpoint ep(fx.svc);
    FetchOptions opt;
    opt.sleeper = [](double) {};
    auto sig = fetch_iq(ep, Timestamp::from_seconds(1.0), 1.25, 0, opt);
    // 1.25 s at 8192 Hz -> 10240 samples across >= 2 requests
    REQUIRE(sig.samples.size() == 10240);
    CHECK(sig.t0.ns == Timestamp::from_seconds(1.0).ns);
    auto want = fx.truth(0, sig.samples.size());
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        err += std::norm(sig.samples[i] - want[i]);
        ref += std::norm(want[i]);
    }
    CHECK(10.0 * std::log10(ref / err) > 80.0);
}

TEST_CASE("fetch_iq backoff sequence and retry reset") {
    Fixture fx(24);
    FlakyEndpoint ep(fx.svc, 3);
    FetchOptions opt;
    std::vector<double> sleeps;
    opt.sleeper = [&](double ms) { sleeps.push_back(ms); };
    auto sig = fetch_iq(ep, Timestamp::from_seconds(1.0), 1.25, 0, opt);
    CHECK(sig.samples.size() == 10240);
    // every chunk needed three retries; backoff restarts after a hit
    REQUIRE(sleeps.size() >= 6);
    CHECK(sleeps[0] == doctest::Approx(100.0));
    CHECK(sleeps[1] == doctest::Approx(200.0));
    CHECK(sleeps[2] == doctest::Approx(400.0));
    CHECK(sleeps[3] == doctest::Approx(100.0));
    CHECK(sleeps[4] == doctest::Approx(200.0));
    CHECK(sleeps[5] == doctest::Approx(400.0));
}

TEST_CASE("fetch_iq exhausts retries, caps backoff") {
    RingStore ring(1.0, 1);
    IqService svc{&ring, 0, 8192.0, 512, 4, false};
    LocalEndpoint ep(svc);  // empty store: every request 404s
    FetchOptions opt;
    opt.max_attempts = 8;
    std::vector<double> sleeps;
    opt.sleeper = [&](double ms) { sleeps.push_back(ms); };
    CHECK_THROWS_AS(fetch_iq(ep, Timestamp::from_seconds(1.0), 0.5, 0, opt),
                    RetriesExhaustedError);
    REQUIRE(sleeps.size() == 7);  // the 8th failure throws instead of sleeping
    CHECK(sleeps[4] == doctest::Approx(1600.0));
    CHECK(sleeps[5] == doctest::Approx(2000.0));  // capped
    CHECK(sleeps[6] == doctest::Approx(2000.0));
}

TEST_CASE("fetch_iq surfaces eviction as a non-retryable error") {
    RingStore ring(0.05, 1);
    const double rate = 8192.0;
    Timestamp t = Timestamp::from_seconds(1.0);
    for (int i = 0; i < 20; ++i) {
        ring.store_block(0, quantize(ramp_signal(t, rate, 512, std::uint64_t(i)), 16));
        t = t.advanced_samples(512, rate);
    }
    IqService svc{&ring, 0, rate, 512, 4, false};
    LocalEndpoint ep(svc);
    FetchOptions opt;
    opt.sleeper = [](double) {};
    CHECK_THROWS_AS(fetch_iq(ep, Timestamp::from_seconds(1.0), 0.1, 0, opt),
                    EvictedRangeError);
}

TEST_CASE("fetch_iq subband mode returns the band-limited signal") {
    Fixture fx(4, true);
    LocalEndpoint ep(fx.svc);
    FetchOptions opt;
    opt.subband = 2;
    opt.fft_len = fx.fft_len;
    opt.n_subbands = fx.n_sub;
    opt.sleeper = [](double) {};
    const double span_s = 4.0 * fx.fft_len / fx.rate;
    auto sig = fetch_iq(ep, Timestamp::from_seconds(1.0), span_s, 0, opt);
    REQUIRE(sig.samples.size() == std::size_t(4 * fx.fft_len));

    // reference: zero every bin outside subband 2 of the stored blocks
    const int width = fx.fft_len / fx.n_sub;
    auto snap = fx.ring.snapshot(0);
    double err = 0.0, ref = 0.0;
    for (int blk = 0; blk < 4; ++blk) {
        auto stored = dequantize(*snap.blocks[std::size_t(blk)]);
        auto spec = fft::fftshift(fft::forward(stored.samples));
        for (int k = 0; k < fx.fft_len; ++k)
            if (k < 2 * width || k >= 3 * width) spec[std::size_t(k)] = 0.0;
        auto filtered = fft::inverse(fft::ifftshift(spec));
        for (int i = 0; i < fx.fft_len; ++i) {
            std::size_t oi = std::size_t(blk * fx.fft_len + i);
            err += std::norm(sig.samples[oi] - filtered[std::size_t(i)]);
            ref += std::norm(filtered[std::size_t(i)]);
        }
    }
    CHECK(10.0 * std::log10(ref / err) > 60.0);
}

TEST_CASE("http server round trip matches the in-process path") {
    Fixture fx(4);
    StationServer server(fx.svc, 18971);
    server.start();
    HttpIqEndpoint http("127.0.0.1", 18971);
    LocalEndpoint local(fx.svc);

    auto s_http = nlohmann::json::parse(http.get_status());
    auto s_local = nlohmann::json::parse(local.get_status());
    CHECK(s_http == s_local);

    IqRequest req;
    req.t0_ns = Timestamp::from_seconds(1.0).ns;
    req.duration_ms = 100;
    auto r_http = http.get_iq(req);
    auto r_local = local.get_iq(req);
    CHECK(r_http.status == r_local.status);
    CHECK(r_http.body == r_local.body);

    req.t0_ns = Timestamp::from_seconds(900.0).ns;  // not captured
    CHECK(http.get_iq(req).status == 404);
    server.stop();
}
