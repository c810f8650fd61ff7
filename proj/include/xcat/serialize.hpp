#pragma once

#include <stdexcept>
#include <string>

#include "xcat/model.hpp"

namespace xcat {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Little-endian binary weight file, magic "HXSR". Round-trips bit-exactly.
void save_weights(const Model<float>& m, const std::string& path);
Model<float> load_weights(const std::string& path);

}  // namespace xcat
