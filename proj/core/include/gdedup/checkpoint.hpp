#pragma once

#include <string>

#include "gdedup/model.hpp"

namespace gdedup {

// Single binary file: little-endian "GDCK" magic, a version word, the
// ModelConfig fields as 32-bit integers, then every tensor in the fixed
// ModelParams::tensors() order as a (rows, cols) shape prefix followed by
// row-major 32-bit floats.
void save_model(const ModelParams& params, const std::string& path);

// Validates magic, version, and every tensor shape against the header.
ModelParams load_model(const std::string& path);

}  // namespace gdedup
