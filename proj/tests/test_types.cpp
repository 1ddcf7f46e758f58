#include <doctest.h>

#include "cran/types.hpp"

using namespace cran;

TEST_CASE("timestamp from_seconds round trip") {
    Timestamp t = Timestamp::from_seconds(1.234567891);
    CHECK(t.ns == 1234567891);
    CHECK(t.frac_ns == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(t.seconds() == doctest::Approx(1.234567891).epsilon(1e-15));

    Timestamp neg = Timestamp::from_seconds(-0.5);
    CHECK(neg.ns == -500000000);
    CHECK(neg.seconds() == doctest::Approx(-0.5));
}

TEST_CASE("timestamp normalize keeps frac in [0,1)") {
    Timestamp t{10, 2.75};
    t.normalize();
    CHECK(t.ns == 12);
    CHECK(t.frac_ns == doctest::Approx(0.75));

    Timestamp u{10, -0.25};
    u.normalize();
    CHECK(u.ns == 9);
    CHECK(u.frac_ns == doctest::Approx(0.75));
}

TEST_CASE("advance by fractional nanoseconds") {
    Timestamp t{100, 0.5};
    Timestamp u = t.advanced_ns(0.75);
    CHECK(u.ns == 101);
    CHECK(u.frac_ns == doctest::Approx(0.25));

    Timestamp v = t.advanced_ns(-1.25);
    CHECK(v.ns == 99);
    CHECK(v.frac_ns == doctest::Approx(0.25));
}

TEST_CASE("block quantum is exact in integer nanoseconds") {
    // 15625 samples at 2.0 MHz and 16384 samples at 2^21 Hz both span
    // exactly 7812500 ns, so window boundaries never drift.
    Timestamp t{0, 0.0};
    Timestamp a = t.advanced_samples(15625, 2.0e6);
    CHECK(a.ns == 7812500);
    CHECK(a.frac_ns == 0.0);
    Timestamp b = t.advanced_samples(16384, 2097152.0);
    CHECK(b.ns == 7812500);
    CHECK(b.frac_ns == 0.0);

    // still exact after an hour of blocks (128 blocks/s)
    Timestamp c{0, 0.0};
    for (int i = 0; i < 460800; ++i) c = c.advanced_samples(16384, 2097152.0);
    Timestamp d = t.advanced_samples(std::int64_t(460800) * 16384, 2097152.0);
    CHECK(c.ns == 3600000000000LL);
    CHECK(c.frac_ns == 0.0);
    CHECK(d.ns == c.ns);
    CHECK(d.frac_ns == 0.0);
}

TEST_CASE("diff and ordering") {
    Timestamp a{5, 0.25}, b{7, 0.75};
    CHECK(b.diff_seconds(a) == doctest::Approx(2.5e-9));
    CHECK(a < b);
    CHECK(!(b < a));
    CHECK(a == a);
    Timestamp c{5, 0.30};
    CHECK(a < c);
}

TEST_CASE("baseband signal time helpers") {
    BasebandSignal s;
    s.sample_rate = 2.0e6;
    s.t0 = Timestamp{1000, 0.0};
    s.samples.assign(4, cplx{1.0, -1.0});
    CHECK(s.duration() == doctest::Approx(2e-6));
    CHECK(s.time_of_sample(2).ns == 2000);
    CHECK(s.end_time().ns == 3000);
    CHECK(s.mean_power() == doctest::Approx(2.0));
}
