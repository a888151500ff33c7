#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "feddpg/tensor.hpp"

namespace feddpg {

// Versioned little-endian parameter bundle:
//   magic "FDPG" | u32 version | u32 tensor count |
//   per tensor: u32 name length | name bytes | u32 ndim | i64 dims | f64 data
// Bit-exact round trips; entry order is part of the format.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParamBundle = std::vector<NamedTensor>;

constexpr uint32_t kParamFormatVersion = 1;

std::vector<unsigned char> serialize_params(const ParamBundle& params);
ParamBundle deserialize_params(const std::vector<unsigned char>& bytes);

void save_params(const ParamBundle& params, const std::string& path);
ParamBundle load_params(const std::string& path);

size_t serialized_size(const ParamBundle& params);

// content fingerprint over names, shapes and raw values
uint64_t params_digest(const ParamBundle& params);

}  // namespace feddpg
