#pragma once

#include <string>

#include "stan/nn.hpp"

namespace stan {

// Little-endian binary weight file, magic "STANW01\0", then per parameter:
// u32 name length, name bytes, u32 rank, u32 dims..., raw 64-bit floats.
void save_weights(const ParamList& params, const std::string& path);

// Loads values into the given parameter list in place; every file entry must
// match an existing parameter's name and shape.
void load_weights(ParamList& params, const std::string& path);

} // namespace stan
