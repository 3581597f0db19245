#pragma once

#include <string>
#include <vector>

#include "rapidash/tensor.hpp"

namespace rapidash {

// Flat binary checkpoint: named parameter blocks, each with name, shape and
// raw little-endian 32-bit float data. A plain-text manifest of names and
// shapes is written next to it as <path>.manifest.txt.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);

// Loads into matching tensors; every name and shape must agree.
void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace rapidash
