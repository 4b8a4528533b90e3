#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace sigmetric {

// Runs one CLI invocation (argv without the program name) and returns the
// process exit code: 0 success, 2 configuration error, 3 data/shape error,
// 4 training error, 5 undefined metric, 1 unexpected internal failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace sigmetric
