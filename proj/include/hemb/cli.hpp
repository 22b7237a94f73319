#ifndef HEMB_CLI_HPP_
#define HEMB_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace hemb::cli {

// Entry point behind the `hemb` binary. Returns the process exit code:
// 0 success, 2 config error, 3 data error, 4 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hemb::cli

#endif  // HEMB_CLI_HPP_
