#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cran/decoder.hpp"
#include "cran/scenario.hpp"
#include "cran/sync.hpp"
#include "cran/types.hpp"

namespace cran {

struct TdoaMeasurement {
    int station_id = 0;      // remote station
    int ref_station_id = 0;
    double delta_t_s = 0.0;  // corrected remote ToA minus corrected reference ToA
    double sigma_s = 0.0;    // combined timing uncertainty
};

// One telegram matched across stations.
struct TdoaSet {
    std::vector<std::uint8_t> payload;
    Timestamp t_ref;  // corrected reference-station ToA
    std::vector<TdoaMeasurement> measurements;
};

// Groups station reports by payload (matching within +-1 s of the
// reference ToA), maps every remote ToA onto the reference clock via
// its sync estimate, and forms reference-relative time differences.
// sigma combines both decoder timing scatters with the sync estimate
// uncertainty. Reports are dropped (with a note in `warnings`) when
// the CRC failed, the sync estimate is missing or stale, or the
// difference exceeds the inter-station flight time by more than 5
// sigma.
std::vector<TdoaSet> tdoa_from_reports(const std::vector<TelegramReport>& reports,
                                       const std::map<int, SyncEstimate>& estimates,
                                       int ref_station_id,
                                       const std::vector<StationConfig>& stations,
                                       double validity_s,
                                       std::vector<std::string>* warnings = nullptr);

struct TdoaSolverOptions {
    bool solve_3d = false;  // default keeps z fixed at the initial guess
    int max_iters = 50;
    double tol_m = 1e-4;    // step-norm convergence threshold
    std::optional<std::array<double, 3>> initial_guess;  // default: station centroid
    std::vector<double>* objective_trace = nullptr;      // accepted-step costs, for tests
};

struct PositionFix {
    std::array<double, 3> position{};
    std::array<double, 9> covariance{};  // row-major 3x3, metres^2; z entries zero in 2D
    bool converged = false;
    int iterations = 0;
    double residual_rms_s = 0.0;  // unweighted ToA-difference residual
};

// Weighted nonlinear least squares on hyperbolic residuals
//   r_i = ((|x-s_i| - |x-s_ref|)/c - delta_t_i) / sigma_i
// via Gauss-Newton with Levenberg-Marquardt damping. The covariance is
// the inverse of the undamped normal matrix at the solution. Throws
// DegenerateGeometryError when the system is underdetermined or the
// undamped normal matrix is singular (collinear stations); a merely
// stalled line search instead returns converged = false.
PositionFix solve_position(const std::vector<TdoaMeasurement>& measurements,
                           const std::vector<StationConfig>& stations,
                           const TdoaSolverOptions& opt = {});

}  // namespace cran
