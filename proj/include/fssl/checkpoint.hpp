#pragma once

#include <string>

#include "fssl/params.hpp"

namespace fssl {

// Flat checkpoint archive: a textual manifest (entry names and shapes)
// followed by raw little-endian 64-bit values in manifest order.
// Round-trips bit-exactly.
void save_params(const std::string& path, const ParamMap& params);
ParamMap load_params(const std::string& path);

}  // namespace fssl
