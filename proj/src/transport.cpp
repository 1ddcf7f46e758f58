#include "cran/transport.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cran/errors.hpp"
#include "cran/fft.hpp"

namespace cran {

using nlohmann::json;

// ---------------------------------------------------------------- RingStore

RingStore::RingStore(double capacity_s, int n_channels) : capacity_s_(capacity_s) {
    if (capacity_s <= 0.0) throw InvalidSpecError("ring store: capacity must be positive");
    if (n_channels < 1) throw InvalidSpecError("ring store: need at least one channel");
    chans_.resize(static_cast<std::size_t>(n_channels));
    evicted_any_.resize(static_cast<std::size_t>(n_channels), false);
    evicted_until_.resize(static_cast<std::size_t>(n_channels));
}

void RingStore::check_channel(int channel_id) const {
    if (channel_id < 0 || channel_id >= static_cast<int>(chans_.size()))
        throw InvalidSpecError("ring store: unknown channel " + std::to_string(channel_id));
}

void RingStore::store_block(int channel_id, QuantizedBlock block) {
    check_channel(channel_id);
    if (block.n_samples < 1 || block.iq.size() != 2 * static_cast<std::size_t>(block.n_samples))
        throw InvalidSpecError("ring store: malformed block");
    std::unique_lock lock(mu_);
    auto& q = chans_[static_cast<std::size_t>(channel_id)];
    if (!q.empty() && !(q.back()->t0 < block.t0))
        throw OutOfOrderError("ring store: block timestamp not increasing on channel " +
                              std::to_string(channel_id));
    q.push_back(std::make_shared<const QuantizedBlock>(std::move(block)));
    // span eviction: newest end minus oldest start
    const auto& newest = *q.back();
    Timestamp newest_end =
        newest.t0.advanced_samples(static_cast<std::int64_t>(newest.n_samples),
                                   newest.sample_rate);
    while (q.size() > 1 && newest_end.diff_seconds(q.front()->t0) > capacity_s_) {
        const auto& oldest = *q.front();
        evicted_until_[static_cast<std::size_t>(channel_id)] = oldest.t0.advanced_samples(
            static_cast<std::int64_t>(oldest.n_samples), oldest.sample_rate);
        evicted_any_[static_cast<std::size_t>(channel_id)] = true;
        q.pop_front();
    }
}

RingStore::Range RingStore::retained_range(int channel_id) const {
    check_channel(channel_id);
    std::shared_lock lock(mu_);
    const auto& q = chans_[static_cast<std::size_t>(channel_id)];
    Range r;
    if (q.empty()) return r;
    r.begin = q.front()->t0;
    r.end = q.back()->t0.advanced_samples(static_cast<std::int64_t>(q.back()->n_samples),
                                          q.back()->sample_rate);
    r.valid = true;
    return r;
}

RingStore::Snapshot RingStore::snapshot(int channel_id) const {
    check_channel(channel_id);
    std::shared_lock lock(mu_);
    Snapshot s;
    const auto& q = chans_[static_cast<std::size_t>(channel_id)];
    s.blocks.assign(q.begin(), q.end());
    s.any_evicted = evicted_any_[static_cast<std::size_t>(channel_id)];
    s.evicted_until = evicted_until_[static_cast<std::size_t>(channel_id)];
    return s;
}

// ------------------------------------------------------------- wire format

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::vector<std::uint8_t>& b, float v) { put_u32(b, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}
float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

constexpr std::size_t kHeaderLen = 32;

std::vector<std::uint8_t> pack_codes(const std::vector<std::int16_t>& codes, int bits) {
    std::vector<std::uint8_t> out;
    if (bits == 8) {
        out.reserve(codes.size());
        for (std::int16_t c : codes)
            out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(c)));
    } else {
        out.reserve(codes.size() * 2);
        for (std::int16_t c : codes) {
            out.push_back(static_cast<std::uint8_t>(c & 0xFF));
            out.push_back(static_cast<std::uint8_t>((c >> 8) & 0xFF));
        }
    }
    return out;
}

std::vector<std::int16_t> unpack_codes(const std::vector<std::uint8_t>& raw, int bits,
                                       std::size_t expect_codes) {
    std::vector<std::int16_t> codes;
    if (bits == 8) {
        if (raw.size() != expect_codes)
            throw FramingError("frame: payload length does not match n_samples");
        codes.reserve(raw.size());
        for (std::uint8_t v : raw) codes.push_back(static_cast<std::int8_t>(v));
    } else {
        if (raw.size() != expect_codes * 2)
            throw FramingError("frame: payload length does not match n_samples");
        codes.reserve(raw.size() / 2);
        for (std::size_t i = 0; i < raw.size(); i += 2)
            codes.push_back(static_cast<std::int16_t>(
                static_cast<std::uint16_t>(raw[i]) |
                (static_cast<std::uint16_t>(raw[i + 1]) << 8)));
    }
    return codes;
}

Timestamp frame_t0(const IqResponseFrame& f) {
    Timestamp t;
    t.ns = static_cast<std::int64_t>(f.t0_ns);
    t.frac_ns = static_cast<double>(f.frac_t0);
    t.normalize();
    return t;
}

std::vector<std::uint8_t> frame_payload_raw(const IqResponseFrame& f) {
    if (f.flags & kFlagCompressed) return decompress_bytes(f.payload);
    return f.payload;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const IqResponseFrame& frame) {
    std::vector<std::uint8_t> b;
    b.reserve(kHeaderLen + frame.payload.size());
    b.push_back('C');
    b.push_back('R');
    b.push_back('I');
    b.push_back('Q');
    b.push_back(frame.version);
    b.push_back(frame.flags);
    b.push_back(frame.channel);
    b.push_back(frame.bits);
    put_u32(b, frame.sample_rate);
    put_u64(b, frame.t0_ns);
    put_f32(b, frame.frac_t0);
    put_u32(b, frame.n_samples);
    put_f32(b, frame.scale);
    b.insert(b.end(), frame.payload.begin(), frame.payload.end());
    return b;
}

IqResponseFrame decode_frame(const std::uint8_t* data, std::size_t n) {
    if (n < kHeaderLen) throw FramingError("frame: shorter than header");
    if (std::memcmp(data, "CRIQ", 4) != 0) throw FramingError("frame: bad magic");
    IqResponseFrame f;
    f.version = data[4];
    if (f.version != 1) throw FramingError("frame: unsupported version");
    f.flags = data[5];
    f.channel = data[6];
    f.bits = data[7];
    f.sample_rate = get_u32(data + 8);
    f.t0_ns = get_u64(data + 12);
    f.frac_t0 = get_f32(data + 20);
    f.n_samples = get_u32(data + 24);
    f.scale = get_f32(data + 28);
    f.payload.assign(data + kHeaderLen, data + n);
    return f;
}

IqResponseFrame decode_frame(const std::vector<std::uint8_t>& data) {
    return decode_frame(data.data(), data.size());
}

BasebandSignal frame_to_signal(const IqResponseFrame& frame) {
    if (frame.flags & kFlagSubband)
        throw InvalidSpecError("frame: subband frame passed to frame_to_signal");
    if (frame.bits != 8 && frame.bits != 16) throw FramingError("frame: bad bits field");
    std::vector<std::uint8_t> raw = frame_payload_raw(frame);
    std::vector<std::int16_t> codes =
        unpack_codes(raw, frame.bits, 2 * static_cast<std::size_t>(frame.n_samples));
    BasebandSignal out;
    out.sample_rate = static_cast<double>(frame.sample_rate);
    out.t0 = frame_t0(frame);
    out.samples.resize(frame.n_samples);
    const double step = static_cast<double>(frame.scale) / quant_full_scale(frame.bits);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = cplx{codes[2 * i] * step, codes[2 * i + 1] * step};
    return out;
}

std::vector<SubbandSegment> frame_to_segments(const IqResponseFrame& frame, int fft_len,
                                              int n_subbands, int subband_index) {
    if (!(frame.flags & kFlagSubband))
        throw InvalidSpecError("frame: sample frame passed to frame_to_segments");
    if (frame.bits != 8 && frame.bits != 16) throw FramingError("frame: bad bits field");
    if (n_subbands < 1 || fft_len < 1 || fft_len % n_subbands != 0)
        throw InvalidSpecError("frame: bad segmentation geometry");
    const std::uint32_t width = static_cast<std::uint32_t>(fft_len / n_subbands);
    if (frame.n_samples == 0 || frame.n_samples % width != 0)
        throw FramingError("frame: subband payload is not a whole number of blocks");
    std::vector<std::uint8_t> raw = frame_payload_raw(frame);
    std::vector<std::int16_t> codes =
        unpack_codes(raw, frame.bits, 2 * static_cast<std::size_t>(frame.n_samples));

    const std::size_t n_blocks = frame.n_samples / width;
    const double rate = static_cast<double>(frame.sample_rate);
    const Timestamp t0 = frame_t0(frame);
    std::vector<SubbandSegment> out(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        SubbandSegment& seg = out[b];
        seg.t0 = t0.advanced_samples(static_cast<std::int64_t>(b) * fft_len, rate);
        seg.channel_id = frame.channel;
        seg.subband_index = subband_index;
        seg.n_subbands = n_subbands;
        seg.fft_len = fft_len;
        seg.bits = frame.bits;
        seg.scale = frame.scale;
        seg.sample_rate = rate;
        seg.iq.assign(codes.begin() + static_cast<std::int64_t>(b) * width * 2,
                      codes.begin() + static_cast<std::int64_t>(b + 1) * width * 2);
    }
    return out;
}

// ------------------------------------------------------------ handle_request

namespace {

json range_json(const RingStore::Range& r) {
    if (!r.valid) return nullptr;
    return json::array({r.begin.ns, r.end.ns});
}

RawResponse error_response(int code, const std::string& message,
                           const RingStore::Range& range) {
    json j;
    j["code"] = code;
    j["message"] = message;
    j["available_range"] = range_json(range);
    std::string s = j.dump();
    RawResponse r;
    r.status = code;
    r.body.assign(s.begin(), s.end());
    r.content_type = "application/json";
    return r;
}

}  // namespace

RawResponse handle_request(const IqService& svc, const IqRequest& req) {
    const RingStore::Range range = svc.store->retained_range(req.channel_id >= 0 &&
                                                             req.channel_id < svc.store->n_channels()
                                                                 ? req.channel_id
                                                                 : 0);
    if (req.channel_id < 0 || req.channel_id >= svc.store->n_channels())
        return error_response(400, "unknown channel", range);
    if (req.duration_ms < 1) return error_response(400, "duration_ms must be >= 1", range);
    if (req.bits != 8 && req.bits != 16)
        return error_response(400, "bits must be 8 or 16", range);
    if (req.subband && (*req.subband < 0 || *req.subband >= svc.n_subbands))
        return error_response(400, "subband index out of range", range);

    RingStore::Snapshot snap = svc.store->snapshot(req.channel_id);
    Timestamp t_req;
    t_req.ns = req.t0_ns;

    if (snap.blocks.empty())
        return error_response(404, "range not yet captured", range);
    if (snap.any_evicted && t_req < snap.evicted_until)
        return error_response(410, "range evicted", range);

    const double rate = svc.sample_rate;
    // locate the block containing t_req
    std::size_t bi = 0;
    while (bi < snap.blocks.size()) {
        const auto& b = *snap.blocks[bi];
        Timestamp end = b.t0.advanced_samples(static_cast<std::int64_t>(b.n_samples), rate);
        if (t_req < end) break;
        ++bi;
    }
    if (bi == snap.blocks.size())
        return error_response(404, "range not yet captured", range);
    if (t_req < snap.blocks[bi]->t0)
        return error_response(404, "range not captured (gap before next window)", range);

    // contiguous run of blocks from bi
    std::vector<const QuantizedBlock*> run;
    run.push_back(snap.blocks[bi].get());
    for (std::size_t j = bi + 1; j < snap.blocks.size(); ++j) {
        const QuantizedBlock* prev = run.back();
        Timestamp prev_end =
            prev->t0.advanced_samples(static_cast<std::int64_t>(prev->n_samples), rate);
        if (std::abs(snap.blocks[j]->t0.diff_seconds(prev_end)) > 0.5 / rate) break;
        run.push_back(snap.blocks[j].get());
    }

    IqResponseFrame frame;
    frame.channel = static_cast<std::uint8_t>(req.channel_id);
    frame.bits = static_cast<std::uint8_t>(req.bits);
    frame.sample_rate = static_cast<std::uint32_t>(std::lround(rate));

    const double want = req.duration_ms * rate / 1000.0;
    const std::int64_t n_want = std::llround(want);
    bool partial = false;
    std::vector<std::int16_t> codes;
    double scale = 1.0;
    Timestamp out_t0;

    if (!req.subband) {
        const QuantizedBlock& blk0 = *run.front();
        const std::int64_t i_local = static_cast<std::int64_t>(
            std::floor(t_req.diff_seconds(blk0.t0) * rate + 1e-6));
        std::int64_t run_total = 0;
        for (const QuantizedBlock* b : run) run_total += b->n_samples;
        const std::int64_t avail = run_total - i_local;
        const std::int64_t n_ret = std::min<std::int64_t>(n_want, avail);
        if (n_ret < 1) return error_response(404, "range not yet captured", range);
        partial = n_ret < n_want;

        std::vector<cplx> vals(static_cast<std::size_t>(n_ret));
        std::int64_t skip = i_local, filled = 0;
        for (const QuantizedBlock* b : run) {
            const std::int64_t nb = b->n_samples;
            if (skip >= nb) {
                skip -= nb;
                continue;
            }
            const double step = b->scale / quant_full_scale(b->bits);
            std::int64_t take = std::min(nb - skip, n_ret - filled);
            for (std::int64_t i = 0; i < take; ++i) {
                std::size_t si = static_cast<std::size_t>(skip + i);
                vals[static_cast<std::size_t>(filled + i)] =
                    cplx{b->iq[2 * si] * step, b->iq[2 * si + 1] * step};
            }
            filled += take;
            skip = 0;
            if (filled == n_ret) break;
        }
        out_t0 = blk0.t0.advanced_samples(i_local, rate);
        scale = quantize_span(vals.data(), vals.size(), req.bits, codes);
        frame.n_samples = static_cast<std::uint32_t>(n_ret);
    } else {
        // whole-block spectral slices
        const int fft_len = svc.fft_len;
        const int width = fft_len / svc.n_subbands;
        for (const QuantizedBlock* b : run)
            if (static_cast<int>(b->n_samples) != fft_len)
                return error_response(400, "store block size does not match fft_len", range);

        const QuantizedBlock& blk0 = *run.front();
        Timestamp t_end = t_req.advanced_ns(static_cast<double>(req.duration_ms) * 1e6);
        std::size_t n_blocks = 0;
        while (n_blocks < run.size()) {
            Timestamp bt = run[n_blocks]->t0;
            if (!(bt < t_end)) break;
            ++n_blocks;
        }
        if (n_blocks == 0) return error_response(404, "range not yet captured", range);
        // partial when the requested span extends past the available run
        Timestamp run_end = run[n_blocks - 1]->t0.advanced_samples(fft_len, rate);
        partial = n_blocks == run.size() && run_end.diff_seconds(t_end) < -0.5 / rate;

        std::vector<cplx> coeffs(n_blocks * static_cast<std::size_t>(width));
        std::vector<cplx> spec(static_cast<std::size_t>(fft_len));
        for (std::size_t nb = 0; nb < n_blocks; ++nb) {
            const QuantizedBlock* b = run[nb];
            const double step = b->scale / quant_full_scale(b->bits);
            for (int i = 0; i < fft_len; ++i)
                spec[static_cast<std::size_t>(i)] =
                    cplx{b->iq[2 * static_cast<std::size_t>(i)] * step,
                         b->iq[2 * static_cast<std::size_t>(i) + 1] * step};
            fft::transform(spec, false);
            spec = fft::fftshift(spec);
            std::copy(spec.begin() + *req.subband * width,
                      spec.begin() + (*req.subband + 1) * width,
                      coeffs.begin() + static_cast<std::int64_t>(nb) * width);
        }
        out_t0 = blk0.t0;
        scale = quantize_span(coeffs.data(), coeffs.size(), req.bits, codes);
        frame.n_samples = static_cast<std::uint32_t>(coeffs.size());
        frame.flags |= kFlagSubband;
    }

    frame.t0_ns = static_cast<std::uint64_t>(out_t0.ns);
    frame.frac_t0 = static_cast<float>(out_t0.frac_ns);
    frame.scale = static_cast<float>(scale);
    std::vector<std::uint8_t> payload = pack_codes(codes, req.bits);
    if (svc.compress) {
        payload = compress_bytes(payload);
        frame.flags |= kFlagCompressed;
    }
    if (partial) frame.flags |= kFlagPartial;
    frame.payload = std::move(payload);

    RawResponse r;
    r.status = partial ? 416 : 200;
    r.body = encode_frame(frame);
    r.content_type = "application/octet-stream";
    return r;
}

std::string status_json(const IqService& svc) {
    json j;
    j["station_id"] = svc.station_id;
    json ranges = json::object();
    for (int ch = 0; ch < svc.store->n_channels(); ++ch)
        ranges[std::to_string(ch)] = range_json(svc.store->retained_range(ch));
    j["retained_range_per_channel"] = ranges;
    j["f_res"] = svc.sample_rate;
    j["n_subbands"] = svc.n_subbands;
    j["fft_len"] = svc.fft_len;
    return j.dump();
}

// ----------------------------------------------------------------- fetch_iq

BasebandSignal fetch_iq(IqEndpoint& endpoint, Timestamp t0, double duration_s,
                        int channel_id, const FetchOptions& opt) {
    if (duration_s <= 0.0) throw InvalidSpecError("fetch: duration must be positive");
    auto sleep_ms = [&](double ms) {
        if (opt.sleeper)
            opt.sleeper(ms);
        else
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    };

    const Timestamp t_end = t0.advanced_seconds(duration_s);
    Timestamp cur = t0;
    double rate = 0.0;

    BasebandSignal out;
    std::vector<SubbandSegment> segments;
    bool have_first = false;
    int attempts = 0;

    while (true) {
        const double remaining = t_end.diff_seconds(cur);
        if (rate > 0.0 && remaining <= 0.5 / rate) break;
        if (rate == 0.0 && remaining <= 0.0) break;

        IqRequest req;
        req.t0_ns = cur.ns + (cur.frac_ns > 1e-9 ? 1 : 0);  // ceil to integer ns
        req.duration_ms =
            static_cast<int>(std::min(1000.0, std::max(1.0, std::ceil(remaining * 1000.0 - 1e-9))));
        req.channel_id = channel_id;
        req.subband = opt.subband;
        req.bits = opt.bits;

        RawResponse resp = endpoint.get_iq(req);
        if (resp.status == 200 || resp.status == 416) {
            IqResponseFrame frame = decode_frame(resp.body);
            Timestamp ft0 = frame_t0(frame);
            rate = static_cast<double>(frame.sample_rate);
            if (!opt.subband) {
                BasebandSignal part = frame_to_signal(frame);
                if (!have_first) {
                    out.t0 = part.t0;
                    out.sample_rate = part.sample_rate;
                    have_first = true;
                } else if (std::abs(ft0.diff_seconds(cur)) > 0.25 / rate) {
                    throw DiscontinuityError("fetch: chunk does not abut previous chunk");
                }
                out.samples.insert(out.samples.end(), part.samples.begin(),
                                   part.samples.end());
                cur = ft0.advanced_samples(static_cast<std::int64_t>(frame.n_samples), rate);
            } else {
                std::vector<SubbandSegment> part =
                    frame_to_segments(frame, opt.fft_len, opt.n_subbands, *opt.subband);
                if (have_first && !part.empty() &&
                    std::abs(part.front().t0.diff_seconds(cur)) > 0.25 / rate)
                    throw DiscontinuityError("fetch: chunk does not abut previous chunk");
                have_first = true;
                const std::size_t n_blocks = part.size();
                segments.insert(segments.end(), part.begin(), part.end());
                cur = part.front().t0.advanced_samples(
                    static_cast<std::int64_t>(n_blocks) * opt.fft_len, rate);
            }
            attempts = 0;
            continue;
        }
        if (resp.status == 404) {
            ++attempts;
            if (attempts >= opt.max_attempts)
                throw RetriesExhaustedError("fetch: gave up after " +
                                            std::to_string(attempts) + " attempts (404)");
            double delay = std::min(opt.backoff_cap_ms,
                                    opt.backoff_base_ms * std::pow(2.0, attempts - 1));
            sleep_ms(delay);
            continue;
        }
        if (resp.status == 410)
            throw EvictedRangeError("fetch: requested range evicted at station");
        throw TransportError("fetch: unexpected status " + std::to_string(resp.status) + ": " +
                             std::string(resp.body.begin(), resp.body.end()));
    }

    if (opt.subband) return reassemble(segments, true);
    return out;
}

// ----------------------------------------------------------- HTTP endpoints

struct HttpIqEndpoint::Impl {
    httplib::Client cli;
    Impl(const std::string& host, int port) : cli(host, port) {
        cli.set_connection_timeout(5, 0);
        cli.set_read_timeout(30, 0);
    }
};

HttpIqEndpoint::HttpIqEndpoint(const std::string& host, int port)
    : impl_(std::make_unique<Impl>(host, port)) {}

HttpIqEndpoint::~HttpIqEndpoint() = default;

RawResponse HttpIqEndpoint::get_iq(const IqRequest& req) {
    std::string path = "/iq?t0=" + std::to_string(req.t0_ns) +
                       "&dur_ms=" + std::to_string(req.duration_ms) +
                       "&ch=" + std::to_string(req.channel_id);
    if (req.subband) path += "&subband=" + std::to_string(*req.subband);
    path += "&bits=" + std::to_string(req.bits);
    auto res = impl_->cli.Get(path);
    if (!res) throw TransportError("http: request failed: " + httplib::to_string(res.error()));
    RawResponse r;
    r.status = res->status;
    r.body.assign(res->body.begin(), res->body.end());
    r.content_type = res->get_header_value("Content-Type");
    return r;
}

std::string HttpIqEndpoint::get_status() {
    auto res = impl_->cli.Get("/status");
    if (!res) throw TransportError("http: status request failed");
    if (res->status != 200)
        throw TransportError("http: status returned " + std::to_string(res->status));
    return res->body;
}

struct StationServer::Impl {
    IqService svc;
    int port = 0;
    httplib::Server srv;
    std::thread th;
    bool running = false;
};

StationServer::StationServer(IqService svc, int port) : impl_(std::make_unique<Impl>()) {
    impl_->svc = svc;
    impl_->port = port;

    impl_->srv.Get("/iq", [svc](const httplib::Request& hreq, httplib::Response& hres) {
        auto parse_ll = [&](const char* name, long long& out) {
            if (!hreq.has_param(name)) return false;
            const std::string& s = hreq.get_param_value(name);
            char* end = nullptr;
            out = std::strtoll(s.c_str(), &end, 10);
            return end && *end == '\0' && !s.empty();
        };
        long long t0 = 0, dur = 0, ch = 0, bits = 16, subband = -1;
        bool ok = parse_ll("t0", t0) && parse_ll("dur_ms", dur) && parse_ll("ch", ch);
        if (hreq.has_param("bits")) ok = ok && parse_ll("bits", bits);
        bool has_sub = hreq.has_param("subband");
        if (has_sub) ok = ok && parse_ll("subband", subband);
        if (!ok) {
            hres.status = 400;
            hres.set_content("{\"code\":400,\"message\":\"malformed query\","
                             "\"available_range\":null}",
                             "application/json");
            return;
        }
        IqRequest req;
        req.t0_ns = t0;
        req.duration_ms = static_cast<int>(dur);
        req.channel_id = static_cast<int>(ch);
        req.bits = static_cast<int>(bits);
        if (has_sub) req.subband = static_cast<int>(subband);
        RawResponse r = handle_request(svc, req);
        hres.status = r.status;
        hres.set_content(std::string(r.body.begin(), r.body.end()), r.content_type);
    });
    impl_->srv.Get("/status", [svc](const httplib::Request&, httplib::Response& hres) {
        hres.set_content(status_json(svc), "application/json");
    });
}

StationServer::~StationServer() { stop(); }

void StationServer::start() {
    if (impl_->running) return;
    if (!impl_->srv.bind_to_port("127.0.0.1", impl_->port))
        throw TransportError("server: cannot bind 127.0.0.1:" + std::to_string(impl_->port) +
                             " (port in use?)");
    impl_->th = std::thread([this] { impl_->srv.listen_after_bind(); });
    for (int i = 0; i < 2000 && !impl_->srv.is_running(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    if (!impl_->srv.is_running()) throw TransportError("server: failed to start listener");
    impl_->running = true;
}

void StationServer::stop() {
    if (!impl_ || !impl_->running) return;
    impl_->srv.stop();
    if (impl_->th.joinable()) impl_->th.join();
    impl_->running = false;
}

int StationServer::port() const { return impl_->port; }

}  // namespace cran
