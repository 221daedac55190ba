#pragma once

#include <string>

#include "blade/mlcore.hpp"

namespace blade::idx {

// Reads an IDX image/label file pair (the MNIST container format) into a
// dataset with features scaled to [0,1]. Image magic 0x803, label magic
// 0x801, counts cross-checked between the two files.
mlcore::Dataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace blade::idx
