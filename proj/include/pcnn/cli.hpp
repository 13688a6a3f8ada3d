#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcnn {

// Runs one CLI invocation. `args` excludes the program name, e.g.
// {"bilateral", "--in", "noisy.pgm", "--out", "clean.pgm"}.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
// Commands read "key = value" config files ('#' comments) via --config;
// explicit flags override file values.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

int run_cli(const std::vector<std::string>& args);  // stdout/stderr

}  // namespace pcnn
