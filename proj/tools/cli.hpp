#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bnpbss::cli {

enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kInvalidArgs = 2,
    kIoFailure = 3,
    kNumericFailure = 4,
};

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name; the first element is the subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_separate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_mix(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_eval(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_bench(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count after applying the BNPBSS_THREADS cap (at least 1).
int capped_threads(int requested);

} // namespace bnpbss::cli
