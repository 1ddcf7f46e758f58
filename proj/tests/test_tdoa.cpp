#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cran/channel.hpp"
#include "cran/errors.hpp"
#include "cran/tdoa.hpp"

using namespace cran;

namespace {

std::vector<StationConfig> field_stations() {
    StationConfig a, b, c;
    a.id = 0;
    b.id = 1;
    b.position = {-1268.0, 287.0, 0.0};
    c.id = 2;
    c.position = {960.0, -2200.0, 0.0};
    return {a, b, c};
}

// exact hyperbolic measurements for a transmitter at `p`
std::vector<TdoaMeasurement> exact_measurements(const std::vector<StationConfig>& st,
                                                const std::array<double, 3>& p,
                                                double sigma = 1e-9) {
    const double d_ref = euclidean_distance(p, st[0].position);
    std::vector<TdoaMeasurement> out;
    for (std::size_t i = 1; i < st.size(); ++i) {
        TdoaMeasurement m;
        m.station_id = st[i].id;
        m.ref_station_id = st[0].id;
        m.delta_t_s = (euclidean_distance(p, st[i].position) - d_ref) / kSpeedOfLight;
        m.sigma_s = sigma;
        out.push_back(m);
    }
    return out;
}

}  // namespace

TEST_CASE("noiseless fix lands on the transmitter") {
    auto st = field_stations();
    const std::array<double, 3> truth{336.0, -770.0, 0.0};
    auto fix = solve_position(exact_measurements(st, truth), st);
    CHECK(fix.converged);
    CHECK(std::hypot(fix.position[0] - truth[0], fix.position[1] - truth[1]) < 1e-6);
    CHECK(fix.position[2] == 0.0);
    CHECK(fix.residual_rms_s < 1e-15);
    CHECK(fix.iterations < 50);
    // 2D covariance: z row/column stays zero
    CHECK(fix.covariance[8] == 0.0);
    CHECK(fix.covariance[0] > 0.0);
    CHECK(fix.covariance[4] > 0.0);
}

TEST_CASE("noisy fixes scatter like the reported covariance") {
    auto st = field_stations();
    const std::array<double, 3> truth{336.0, -770.0, 0.0};
    const double sigma = 1e-9;
    auto clean = exact_measurements(st, truth, sigma);
    auto ref_fix = solve_position(clean, st);
    REQUIRE(ref_fix.converged);
    const double pred_rmse = std::sqrt(ref_fix.covariance[0] + ref_fix.covariance[4]);

    std::mt19937_64 g(2024);
    std::normal_distribution<double> nd(0.0, sigma);
    const int n_trials = 150;
    double sq = 0.0;
    int conv = 0;
    for (int t = 0; t < n_trials; ++t) {
        auto meas = clean;
        for (auto& m : meas) m.delta_t_s += nd(g);
        auto fix = solve_position(meas, st);
        if (!fix.converged) continue;
        ++conv;
        sq += std::pow(fix.position[0] - truth[0], 2) + std::pow(fix.position[1] - truth[1], 2);
    }
    REQUIRE(conv == n_trials);
    const double rmse = std::sqrt(sq / conv);
    CHECK(rmse / pred_rmse > 0.6);
    CHECK(rmse / pred_rmse < 1.6);
}

TEST_CASE("3D solve with four stations") {
    std::vector<StationConfig> st = field_stations();
    StationConfig d;
    d.id = 3;
    d.position = {400.0, 900.0, 600.0};  // needs real vertical aperture
    st.push_back(d);
    st[1].position[2] = 30.0;
    st[2].position[2] = 10.0;
    const std::array<double, 3> truth{300.0, -700.0, 50.0};
    TdoaSolverOptions opt;
    opt.solve_3d = true;
    opt.initial_guess = {{250.0, -650.0, 80.0}};  // centroid sits on the wrong z branch
    auto fix = solve_position(exact_measurements(st, truth), st, opt);
    CHECK(fix.converged);
    CHECK(std::abs(fix.position[0] - truth[0]) < 1e-4);
    CHECK(std::abs(fix.position[1] - truth[1]) < 1e-4);
    CHECK(std::abs(fix.position[2] - truth[2]) < 1e-3);
    CHECK(fix.covariance[8] > 0.0);
}

TEST_CASE("degenerate geometries are refused") {
    // collinear stations cannot resolve the cross-track direction
    std::vector<StationConfig> line(3);
    line[0].id = 0;
    line[1].id = 1;
    line[1].position = {1000.0, 0.0, 0.0};
    line[2].id = 2;
    line[2].position = {2000.0, 0.0, 0.0};
    auto meas = exact_measurements(line, {500.0, 0.0, 0.0});
    CHECK_THROWS_AS(solve_position(meas, line), DegenerateGeometryError);

    // one measurement cannot fix two unknowns
    auto st = field_stations();
    auto one = exact_measurements(st, {336.0, -770.0, 0.0});
    one.resize(1);
    CHECK_THROWS_AS(solve_position(one, st), DegenerateGeometryError);
}

TEST_CASE("solver rejects inconsistent inputs") {
    auto st = field_stations();
    auto meas = exact_measurements(st, {336.0, -770.0, 0.0});
    meas[1].ref_station_id = 1;  // mixed reference
    CHECK_THROWS_AS(solve_position(meas, st), InvalidSpecError);

    meas = exact_measurements(st, {336.0, -770.0, 0.0});
    meas[0].sigma_s = 0.0;
    CHECK_THROWS_AS(solve_position(meas, st), InvalidSpecError);

    meas = exact_measurements(st, {336.0, -770.0, 0.0});
    meas[0].station_id = 9;  // unknown station
    CHECK_THROWS_AS(solve_position(meas, st), InvalidSpecError);
}

TEST_CASE("accepted LM steps never increase the cost") {
    auto st = field_stations();
    auto meas = exact_measurements(st, {336.0, -770.0, 0.0});
    std::mt19937_64 g(7);
    std::normal_distribution<double> nd(0.0, 5e-9);
    for (auto& m : meas) m.delta_t_s += nd(g);

    std::vector<double> trace;
    TdoaSolverOptions opt;
    opt.initial_guess = {{4000.0, 3000.0, 0.0}};
    opt.objective_trace = &trace;
    auto fix = solve_position(meas, st, opt);
    CHECK(fix.converged);
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

namespace {

TelegramReport make_report(int station, double toa_s, std::vector<std::uint8_t> payload,
                           double sigma = 2e-9, bool crc = true) {
    TelegramReport r;
    r.station_id = station;
    r.toa = Timestamp::from_seconds(toa_s);
    r.toa_sigma_s = sigma;
    r.payload = std::move(payload);
    r.crc_ok = crc;
    r.topic = "cran/bs" + std::to_string(station) + "/uplink";
    return r;
}

SyncEstimate make_estimate(double tau_s, double t_mid_s, double sigma = 1e-9) {
    SyncEstimate e;
    e.tau_s = tau_s;
    e.sigma_tau_s = sigma;
    e.t_mid = Timestamp::from_seconds(t_mid_s);
    return e;
}

}  // namespace

TEST_CASE("report grouping forms reference-relative differences") {
    auto st = field_stations();
    const std::array<double, 3> tx{336.0, -770.0, 0.0};
    const double t_tx = 100.0;
    const double off1 = 3.2e-6, off2 = -1.7e-6;
    std::vector<std::uint8_t> pay{1, 2, 3, 4, 5, 6, 7, 8};

    auto toa_true = [&](int i) {
        return t_tx + euclidean_distance(tx, st[std::size_t(i)].position) / kSpeedOfLight;
    };
    std::vector<TelegramReport> reports{
        make_report(0, toa_true(0), pay),
        make_report(1, toa_true(1) + off1, pay),
        make_report(2, toa_true(2) + off2, pay),
    };
    std::map<int, SyncEstimate> est{
        {1, make_estimate(off1, t_tx)},
        {2, make_estimate(off2, t_tx)},
    };

    std::vector<std::string> warnings;
    auto sets = tdoa_from_reports(reports, est, 0, st, 60.0, &warnings);
    CHECK(warnings.empty());
    REQUIRE(sets.size() == 1);
    REQUIRE(sets[0].measurements.size() == 2);
    CHECK(sets[0].payload == pay);
    for (const auto& m : sets[0].measurements) {
        const double want = toa_true(m.station_id) - toa_true(0);
        CHECK(std::abs(m.delta_t_s - want) < 1e-12);
        CHECK(m.ref_station_id == 0);
        // decoder sigma (both ends) plus sync sigma, in quadrature
        CHECK(m.sigma_s == doctest::Approx(std::sqrt(2e-9 * 2e-9 * 2 + 1e-9 * 1e-9)));
    }

    // the solver should reproduce the transmitter from these sets
    auto fix = solve_position(sets[0].measurements, st);
    CHECK(fix.converged);
    CHECK(std::hypot(fix.position[0] - tx[0], fix.position[1] - tx[1]) < 1e-5);
}

TEST_CASE("report grouping separates payloads and drops bad reports") {
    auto st = field_stations();
    std::vector<std::uint8_t> pay_a{1, 1, 1, 1, 1, 1, 1, 1};
    std::vector<std::uint8_t> pay_b{2, 2, 2, 2, 2, 2, 2, 2};

    std::vector<TelegramReport> reports{
        make_report(0, 100.0, pay_a),
        make_report(1, 100.000001, pay_a),
        make_report(0, 190.0, pay_b),
        make_report(1, 190.000002, pay_b),
        make_report(2, 190.000001, pay_b, 2e-9, false),  // CRC failure
    };
    std::map<int, SyncEstimate> est{
        {1, make_estimate(0.0, 100.0)},
        {2, make_estimate(0.0, 190.0)},
    };
    // estimate for station 1 at t=100 is stale for the t=190 telegram
    est[1].t_mid = Timestamp::from_seconds(100.0);

    std::vector<std::string> warnings;
    auto sets = tdoa_from_reports(reports, est, 0, st, 60.0, &warnings);
    REQUIRE(sets.size() == 1);  // pay_b group lost both remotes
    CHECK(sets[0].payload == pay_a);
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("CRC") != std::string::npos);
    CHECK(warnings[1].find("station 1") != std::string::npos);
}

TEST_CASE("report grouping drops unmatched and unsynchronized remotes") {
    auto st = field_stations();
    std::vector<std::uint8_t> pay{9, 9, 9, 9, 9, 9, 9, 9};
    std::vector<TelegramReport> reports{
        make_report(0, 100.0, pay),
        make_report(1, 100.000001, pay),                        // no sync estimate
        make_report(2, 100.000001, {8, 8, 8, 8, 8, 8, 8, 8}),   // no reference partner
    };
    std::vector<std::string> warnings;
    auto sets = tdoa_from_reports(reports, {}, 0, st, 60.0, &warnings);
    CHECK(sets.empty());
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("no sync estimate") != std::string::npos);
    CHECK(warnings[1].find("no matching reference") != std::string::npos);
}

TEST_CASE("physically impossible differences are gated") {
    auto st = field_stations();
    std::vector<std::uint8_t> pay{3, 3, 3, 3, 3, 3, 3, 3};
    // station 1 baseline is 1300.1 m -> 4.34 us flight time; 50 us breaks it
    std::vector<TelegramReport> reports{
        make_report(0, 100.0, pay),
        make_report(1, 100.0 + 50e-6, pay),
    };
    std::map<int, SyncEstimate> est{{1, make_estimate(0.0, 100.0)}};
    std::vector<std::string> warnings;
    auto sets = tdoa_from_reports(reports, est, 0, st, 60.0, &warnings);
    CHECK(sets.empty());
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("flight time") != std::string::npos);
}

TEST_CASE("unknown reference station is an error") {
    auto st = field_stations();
    CHECK_THROWS_AS(tdoa_from_reports({}, {}, 7, st, 60.0, nullptr), InvalidSpecError);
}
