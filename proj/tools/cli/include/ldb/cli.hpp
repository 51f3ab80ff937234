#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ldb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
// Infeasible, vacuous or failed outcome; the report is still written.
inline constexpr int kExitOutcome = 2;

struct RunSpec {
    std::string command;                  // constants, grid, distance, bound,
                                          // simulate-evolution, verify, pipeline
    std::string model;                    // catalog name or path to a JSON model file
    std::optional<std::string> params;    // path to a JSON parameter file
    std::string out_dir = "ldb-out";
    std::uint64_t seed = 0;
    std::optional<int> q;
    std::vector<std::string> overrides;   // KEY=VALUE for the universal constants
    std::optional<std::size_t> n_paths;
    std::optional<int> pieces;
};

[[nodiscard]] const std::vector<std::string>& commands();

// Runs one command, writing report.json (and CSVs) to spec.out_dir plus a
// meta.json with timing. Returns one of the exit codes above.
int execute(const RunSpec& spec, std::ostream& out, std::ostream& err);

// Parses argv into a RunSpec and executes it.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ldb::cli
