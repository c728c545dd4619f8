#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cafe::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalid = 1,  // usage or validation error
  kFailed = 2,   // runtime failure
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cafe::cli
