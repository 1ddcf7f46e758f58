#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cran/scenario.hpp"

namespace cran {

enum class RunMode { inproc, sockets };

struct ExperimentResult {
    std::string name;
    std::string config_hash;
    std::vector<std::filesystem::path> csv_paths;
    std::filesystem::path summary_json_path;
    std::map<std::string, double> metrics;
    std::vector<std::string> errors;  // per-epoch anomalies; empty on a clean run
};

// Full end-to-end simulation: per transmit epoch, synthesizes the
// uplink telegram and the broadcast channel, captures both at every
// station, decodes telegrams from the raw stream, resamples and stores
// blocks in each station's ring, fetches IQ back through the transport
// (in-process or over loopback HTTP), estimates pairwise clock state,
// and solves positions. Writes reports.jsonl, sync/fix CSVs and
// summary.json into out_dir. Output bytes depend only on the config.
ExperimentResult run_scenario(const ScenarioConfig& cfg,
                              const std::filesystem::path& out_dir, RunMode mode);

// Named studies sharing the scenario config:
//   "run"        full pipeline, in-process transport
//   "per-table"  decode-only packet-delivery study (no transport/sync)
//   "sync-sigma" alias of "run"; the sync CSVs are the product
//   "tdoa-mc"    solver-only Monte Carlo on the configured geometry
ExperimentResult run_experiment(const std::string& name, const ScenarioConfig& cfg,
                                const std::filesystem::path& out_dir);

// Applies "dotted.path[2].key=value" overrides onto raw config JSON
// (values parse as JSON when possible, else as strings). Used by the
// CLI before scenario validation.
std::string apply_config_overrides(const std::string& json_text,
                                   const std::vector<std::string>& overrides);

}  // namespace cran
