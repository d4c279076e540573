#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vgcm::cli {

/// Entry point behind the vgcm binary; also called in-process by tests.
/// Exit codes: 0 success, 2 config/input error, 3 runtime guard.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace vgcm::cli
