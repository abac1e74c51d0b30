#pragma once

#include "blq/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace blq {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitFailed = 4;

struct RunConfig {
    std::string command;
    std::filesystem::path problem_path;
    std::filesystem::path out_dir = "blq_out";
    SolveConfig solve;
    bool eps_given = false;
    int threads = 0;
    std::string inject_defect;   // "", "control" or "triple"
    long dump_paths = 100;       // scenarios written to the per-path CSV files
    bool run_oracle = true;
};

// Digest of everything that determines the artifacts (problem text and numeric settings).
std::string config_hash(const RunConfig& cfg, const std::string& problem_text);

// Parses argv and runs one command; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace blq
