#include "cran/tdoa.hpp"

#include <algorithm>
#include <cmath>

#include "cran/channel.hpp"
#include "cran/errors.hpp"

namespace cran {

namespace {

std::string hex_of(const std::vector<std::uint8_t>& v) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(v.size() * 2);
    for (std::uint8_t b : v) {
        s += digits[b >> 4];
        s += digits[b & 0xF];
    }
    return s;
}

void note(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

}  // namespace

std::vector<TdoaSet> tdoa_from_reports(const std::vector<TelegramReport>& reports,
                                       const std::map<int, SyncEstimate>& estimates,
                                       int ref_station_id,
                                       const std::vector<StationConfig>& stations,
                                       double validity_s,
                                       std::vector<std::string>* warnings) {
    auto station_of = [&](int id) -> const StationConfig* {
        for (const auto& st : stations)
            if (st.id == id) return &st;
        return nullptr;
    };
    if (!station_of(ref_station_id))
        throw InvalidSpecError("tdoa: reference station not in station list");

    // reference-station anchors, in input order
    struct Group {
        const TelegramReport* ref;
        CorrectedToa t_ref;
        std::vector<TdoaMeasurement> meas;
    };
    std::vector<Group> groups;
    std::vector<const TelegramReport*> others;

    for (const auto& rep : reports) {
        if (!rep.crc_ok) {
            note(warnings, "station " + std::to_string(rep.station_id) +
                               ": dropped report with failed CRC");
            continue;
        }
        if (!station_of(rep.station_id)) {
            note(warnings, "station " + std::to_string(rep.station_id) +
                               ": not in station list, report dropped");
            continue;
        }
        if (rep.station_id == ref_station_id)
            groups.push_back({&rep, {}, {}});
        else
            others.push_back(&rep);
    }

    // map the reference ToAs onto the reference clock (identity unless
    // an estimate was supplied for the reference itself)
    for (auto& g : groups) {
        auto it = estimates.find(ref_station_id);
        if (it == estimates.end()) {
            g.t_ref.toa = g.ref->toa;
            g.t_ref.sigma_s = 0.0;
        } else {
            g.t_ref = apply_correction(g.ref->toa, it->second, validity_s);
        }
    }

    for (const TelegramReport* rep : others) {
        Group* match = nullptr;
        for (auto& g : groups) {
            if (g.ref->payload != rep->payload) continue;
            if (std::abs(rep->toa.diff_seconds(g.ref->toa)) > 1.0) continue;
            match = &g;
            break;
        }
        if (!match) {
            note(warnings, "station " + std::to_string(rep->station_id) +
                               ": no matching reference report for payload " +
                               hex_of(rep->payload));
            continue;
        }
        auto it = estimates.find(rep->station_id);
        if (it == estimates.end()) {
            note(warnings, "station " + std::to_string(rep->station_id) +
                               ": no sync estimate, report dropped");
            continue;
        }
        CorrectedToa corrected;
        try {
            corrected = apply_correction(rep->toa, it->second, validity_s);
        } catch (const StaleEstimateError& e) {
            note(warnings, "station " + std::to_string(rep->station_id) + ": " + e.what());
            continue;
        }

        TdoaMeasurement m;
        m.station_id = rep->station_id;
        m.ref_station_id = ref_station_id;
        m.delta_t_s = corrected.toa.diff_seconds(match->t_ref.toa);
        m.sigma_s = std::sqrt(match->ref->toa_sigma_s * match->ref->toa_sigma_s +
                              rep->toa_sigma_s * rep->toa_sigma_s +
                              corrected.sigma_s * corrected.sigma_s);

        const double baseline = euclidean_distance(station_of(rep->station_id)->position,
                                                   station_of(ref_station_id)->position);
        const double limit = baseline / kSpeedOfLight + 5.0 * m.sigma_s;
        if (std::abs(m.delta_t_s) > limit) {
            note(warnings, "station " + std::to_string(rep->station_id) +
                               ": time difference exceeds the inter-station flight time");
            continue;
        }
        match->meas.push_back(m);
    }

    std::vector<TdoaSet> out;
    for (auto& g : groups) {
        if (g.meas.empty()) continue;
        TdoaSet set;
        set.payload = g.ref->payload;
        set.t_ref = g.t_ref.toa;
        set.measurements = std::move(g.meas);
        out.push_back(std::move(set));
    }
    return out;
}

namespace {

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::max(euclidean_distance(a, b), 1e-9);
}

// dims x dims solve / inverse on row-major storage; dims is 2 or 3
bool solve_small(int dims, const double* a, const double* b, double* x) {
    if (dims == 2) {
        double det = a[0] * a[3] - a[1] * a[2];
        if (det == 0.0) return false;
        x[0] = (b[0] * a[3] - b[1] * a[1]) / det;
        x[1] = (a[0] * b[1] - a[2] * b[0]) / det;
        return true;
    }
    double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                 a[2] * (a[3] * a[7] - a[4] * a[6]);
    if (det == 0.0) return false;
    double inv[9] = {
        (a[4] * a[8] - a[5] * a[7]), -(a[1] * a[8] - a[2] * a[7]), (a[1] * a[5] - a[2] * a[4]),
        -(a[3] * a[8] - a[5] * a[6]), (a[0] * a[8] - a[2] * a[6]), -(a[0] * a[5] - a[2] * a[3]),
        (a[3] * a[7] - a[4] * a[6]), -(a[0] * a[7] - a[1] * a[6]), (a[0] * a[4] - a[1] * a[3])};
    for (int i = 0; i < 3; ++i) {
        x[i] = 0.0;
        for (int j = 0; j < 3; ++j) x[i] += inv[3 * i + j] / det * b[j];
    }
    return true;
}

bool invert_small(int dims, const double* a, double* out) {
    if (dims == 2) {
        double det = a[0] * a[3] - a[1] * a[2];
        if (det == 0.0) return false;
        out[0] = a[3] / det;
        out[1] = -a[1] / det;
        out[2] = -a[2] / det;
        out[3] = a[0] / det;
        return true;
    }
    double cols[3][3];
    for (int j = 0; j < 3; ++j) {
        double e[3] = {0.0, 0.0, 0.0};
        e[j] = 1.0;
        if (!solve_small(3, a, e, cols[j])) return false;
    }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[3 * i + j] = cols[j][i];
    return true;
}

bool singular_normal(int dims, const double* a) {
    if (dims == 2) {
        double scale = a[0] * a[3];
        return scale <= 0.0 || a[0] * a[3] - a[1] * a[2] <= 1e-12 * scale;
    }
    double scale = a[0] * a[4] * a[8];
    double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                 a[2] * (a[3] * a[7] - a[4] * a[6]);
    return scale <= 0.0 || det <= 1e-12 * scale;  // Hadamard-relative
}

}  // namespace

PositionFix solve_position(const std::vector<TdoaMeasurement>& measurements,
                           const std::vector<StationConfig>& stations,
                           const TdoaSolverOptions& opt) {
    const int dims = opt.solve_3d ? 3 : 2;
    if (static_cast<int>(measurements.size()) < dims)
        throw DegenerateGeometryError("tdoa: " + std::to_string(measurements.size()) +
                                      " measurements cannot fix " + std::to_string(dims) +
                                      " coordinates");
    auto station_of = [&](int id) -> const StationConfig& {
        for (const auto& st : stations)
            if (st.id == id) return st;
        throw InvalidSpecError("tdoa: unknown station id " + std::to_string(id));
    };
    const int ref_id = measurements.front().ref_station_id;
    for (const auto& m : measurements) {
        if (m.ref_station_id != ref_id)
            throw InvalidSpecError("tdoa: measurements mix reference stations");
        if (m.sigma_s <= 0.0) throw InvalidSpecError("tdoa: sigma must be positive");
    }
    const std::array<double, 3>& s_ref = station_of(ref_id).position;
    std::vector<const std::array<double, 3>*> s_rem;
    s_rem.reserve(measurements.size());
    for (const auto& m : measurements) s_rem.push_back(&station_of(m.station_id).position);

    std::array<double, 3> x{};
    if (opt.initial_guess) {
        x = *opt.initial_guess;
    } else {
        // centroid of the involved stations
        x = s_ref;
        for (const auto* p : s_rem)
            for (int i = 0; i < 3; ++i) x[static_cast<std::size_t>(i)] += (*p)[static_cast<std::size_t>(i)];
        for (int i = 0; i < 3; ++i)
            x[static_cast<std::size_t>(i)] /= static_cast<double>(s_rem.size() + 1);
    }

    const std::size_t n = measurements.size();
    auto residuals = [&](const std::array<double, 3>& p, std::vector<double>& r) {
        double cost = 0.0;
        const double dr = dist3(p, s_ref);
        for (std::size_t i = 0; i < n; ++i) {
            double di = dist3(p, *s_rem[i]);
            r[i] = ((di - dr) / kSpeedOfLight - measurements[i].delta_t_s) /
                   measurements[i].sigma_s;
            cost += r[i] * r[i];
        }
        return cost;
    };
    auto jacobian = [&](const std::array<double, 3>& p, std::vector<double>& jac) {
        const double dr = dist3(p, s_ref);
        for (std::size_t i = 0; i < n; ++i) {
            double di = dist3(p, *s_rem[i]);
            for (int d = 0; d < dims; ++d) {
                double ui = (p[static_cast<std::size_t>(d)] - (*s_rem[i])[static_cast<std::size_t>(d)]) / di;
                double ur = (p[static_cast<std::size_t>(d)] - s_ref[static_cast<std::size_t>(d)]) / dr;
                jac[i * static_cast<std::size_t>(dims) + static_cast<std::size_t>(d)] =
                    (ui - ur) / (kSpeedOfLight * measurements[i].sigma_s);
            }
        }
    };
    auto normal = [&](const std::vector<double>& jac, const std::vector<double>& r,
                      double* jtj, double* jtr) {
        for (int a = 0; a < dims; ++a) {
            jtr[a] = 0.0;
            for (int b = 0; b < dims; ++b) jtj[a * dims + b] = 0.0;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (int a = 0; a < dims; ++a) {
                jtr[a] += jac[i * static_cast<std::size_t>(dims) + static_cast<std::size_t>(a)] * r[i];
                for (int b = 0; b < dims; ++b)
                    jtj[a * dims + b] +=
                        jac[i * static_cast<std::size_t>(dims) + static_cast<std::size_t>(a)] *
                        jac[i * static_cast<std::size_t>(dims) + static_cast<std::size_t>(b)];
            }
    };

    PositionFix fix;
    std::vector<double> r(n), r_new(n), jac(n * static_cast<std::size_t>(dims));
    double jtj[9], jtr[3], jtj_damped[9], step[3];
    double lambda = 1e-3;
    double cost = residuals(x, r);
    if (opt.objective_trace) opt.objective_trace->push_back(cost);

    for (int iter = 0; iter < opt.max_iters; ++iter) {
        fix.iterations = iter + 1;
        jacobian(x, jac);
        normal(jac, r, jtj, jtr);
        if (singular_normal(dims, jtj))
            throw DegenerateGeometryError("tdoa: normal equations singular (collinear geometry?)");

        bool accepted = false;
        double step_norm = 0.0;
        for (int tries = 0; tries < 15 && !accepted; ++tries) {
            for (int a = 0; a < dims; ++a)
                for (int b = 0; b < dims; ++b)
                    jtj_damped[a * dims + b] =
                        jtj[a * dims + b] + (a == b ? lambda * jtj[a * dims + b] : 0.0);
            if (!solve_small(dims, jtj_damped, jtr, step)) {
                lambda *= 10.0;
                continue;
            }
            std::array<double, 3> x_new = x;
            step_norm = 0.0;
            for (int d = 0; d < dims; ++d) {
                x_new[static_cast<std::size_t>(d)] -= step[d];
                step_norm += step[d] * step[d];
            }
            step_norm = std::sqrt(step_norm);
            double cost_new = residuals(x_new, r_new);
            if (cost_new <= cost) {
                x = x_new;
                cost = cost_new;
                r.swap(r_new);
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) break;  // stalled; converged stays false unless tolerance was met
        if (opt.objective_trace) opt.objective_trace->push_back(cost);
        if (step_norm < opt.tol_m) {
            fix.converged = true;
            break;
        }
    }

    fix.position = x;
    jacobian(x, jac);
    residuals(x, r);
    normal(jac, r, jtj, jtr);
    double inv[9];
    if (!singular_normal(dims, jtj) && invert_small(dims, jtj, inv)) {
        for (int a = 0; a < dims; ++a)
            for (int b = 0; b < dims; ++b)
                fix.covariance[static_cast<std::size_t>(a * 3 + b)] = inv[a * dims + b];
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double u = r[i] * measurements[i].sigma_s;  // back to seconds
        acc += u * u;
    }
    fix.residual_rms_s = std::sqrt(acc / static_cast<double>(n));
    return fix;
}

}  // namespace cran
