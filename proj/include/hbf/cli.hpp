#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hbf/trainer.hpp"

namespace hbf {

enum class SweepAxis { TransmitPowerDbm, FeedbackBits };

std::string to_string(SweepAxis a);
SweepAxis axis_from_string(const std::string& s);

struct SweepSpec {
    SweepAxis axis = SweepAxis::TransmitPowerDbm;
    std::vector<double> values;
    std::vector<Method> methods;
};

/// Throws ConfigError for empty lists or feedback budgets with no valid (D, V) layout for cfg.
void validate(const SweepSpec& spec, const SystemConfig& cfg);

struct ResultRow {
    std::string method;
    double axis_value = 0.0;
    double mean_se = 0.0;
    double stderr_se = 0.0;
    std::size_t n = 0;
};

inline constexpr const char* kResultsHeader = "method,axis_value,mean_se,stderr,n";

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
/// Throws FormatError on a bad header or malformed row.
std::vector<ResultRow> read_results_csv(const std::string& path);

/// Line chart of mean SE against the axis, one series per method, with
/// standard-error bars. Throws FormatError when `rows` is empty.
std::string render_svg(const std::vector<ResultRow>& rows, SweepAxis axis,
                       const std::string& title = "");

/// Dataset cache directory: $HBF_DATA_DIR, else "data".
std::string data_dir();

/// Exit codes of run_subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitMissingFile = 3,
    kExitConstraint = 4,
    kExitFormat = 5,
};

/// Entry point of the `hbf` tool. args[0] is the program name. Diagnostics go
/// to `err` as one line per failure; progress goes to `err` unless --quiet.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hbf
