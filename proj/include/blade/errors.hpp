#pragma once
#include <stdexcept>
#include <string>

namespace blade {

// Exit codes used by the CLI; library exceptions map onto these in main().
enum ExitCode : int {
    exit_ok = 0,
    exit_bad_config = 2,
    exit_infeasible_budget = 3,
    exit_divergence = 4,
    exit_io = 5,
    exit_audit_fail = 6,
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleBudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// a balance-sheet or chain invariant broke: unreachable by construction,
// thrown so tests can prove it stays that way
struct InvariantError : std::logic_error {
    explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when local training hits a non-finite loss; carries the epoch it happened in.
struct DivergenceError : std::runtime_error {
    int epoch;
    DivergenceError(int epoch_, const std::string& msg) : std::runtime_error(msg), epoch(epoch_) {}
};

} // namespace blade
