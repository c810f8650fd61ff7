#pragma once

#include <string>
#include <vector>

#include "xcat/model.hpp"

namespace xcat {

// Named architecture presets: the baseline, the ablation rows A-M, and the
// concat-comparison grid. All definitions live in presets.cpp.
XcatConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace xcat
