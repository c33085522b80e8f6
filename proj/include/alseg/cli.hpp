#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "alseg/core.hpp"
#include "alseg/data.hpp"
#include "alseg/oracle_loop.hpp"

namespace alseg::cli {

inline constexpr const char* kEngineVersion = "0.3.0";

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Full-scale protocol: m=20, n=2000, k=20, T=25, 128 px patches.
ExperimentConfig paper_preset();
/// Scaled-down protocol for CI: m=10, n=400, k=5, T=10, 32 px patches.
ExperimentConfig desk_preset();

/// Pool, oracle and test tiles derived from one volume for one config.
struct ExperimentData {
    std::vector<PatchSample> pool;  // unlabeled, indexed 0..n-1
    loop::SimulatedOracle oracle;
    std::vector<PatchSample> test;  // labeled tiles of the held-out half
};

/// Splits the volume along y, samples the pool from the train half (seeded by
/// config.seed) and tiles the test half.
ExperimentData prepare_data(const data::Volume& volume, const ExperimentConfig& config);

/// Entry point shared by the `alseg` binary and in-process callers.
/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace alseg::cli
