#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dclp/config.hpp"
#include "dclp/error.hpp"
#include "dclp/grad_check.hpp"

namespace dclp {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitUsage = 2,
    kExitData = 3,
    kExitIo = 4,
    kExitNumeric = 5,
};

int exit_code_for(ErrorKind kind);

const std::vector<std::string>& subcommands();

/// Runs the full desk-profile gradient check (combined loss, dropout off)
/// over every parameter tensor.
GradCheckReport run_gradcheck(const RunConfig& cfg);

/// Executes one subcommand. Artifacts go under cfg.out; the table or
/// prediction goes to `out`; a one-line reason goes to `err` on failure.
int run(const std::string& subcommand, const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace dclp
