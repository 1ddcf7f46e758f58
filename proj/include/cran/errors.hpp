#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cran {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration / waveform parameters.
struct InvalidSpecError : Error {
    using Error::Error;
};

// Burst placement could not satisfy the collision rule within the
// retry budget.
struct SlotCollisionError : Error {
    using Error::Error;
};

// Wire or frame payload failed structural validation.
struct FramingError : Error {
    using Error::Error;
};

// Compressed payload failed its integrity check.
struct ChecksumError : Error {
    using Error::Error;
};

// Subband reassembly was asked for a complete signal but segments are
// missing; `missing` lists the absent subband indices.
struct IncompleteSetError : Error {
    std::vector<int> missing;
    IncompleteSetError(const std::string& what, std::vector<int> missing_idx)
        : Error(what), missing(std::move(missing_idx)) {}
};

// Blocks arriving at the store out of timestamp order.
struct OutOfOrderError : Error {
    using Error::Error;
};

// Requested range was evicted from the ring store (non-retryable).
struct EvictedRangeError : Error {
    using Error::Error;
};

// Retry budget exhausted while fetching.
struct RetriesExhaustedError : Error {
    using Error::Error;
};

// Fetched chunks are not sample-contiguous.
struct DiscontinuityError : Error {
    using Error::Error;
};

// Correlation peak below lock threshold; no usable sync estimate.
struct NoLockError : Error {
    using Error::Error;
};

// Block phase progression too fast to unwrap without ambiguity.
struct AmbiguityError : Error {
    using Error::Error;
};

// Sync estimate too old to apply to a ToA.
struct StaleEstimateError : Error {
    using Error::Error;
};

// Solver geometry is rank deficient (stations collinear, etc).
struct DegenerateGeometryError : Error {
    using Error::Error;
};

// Transport-level failure talking to a station endpoint.
struct TransportError : Error {
    using Error::Error;
};

}  // namespace cran
