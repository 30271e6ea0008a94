#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchmil/nn/tensor.hpp"

namespace patchmil::nn {

/// Named float tensors as stored in a MILC checkpoint, in file order.
using TensorMap = ParamSet<float>;

// MILC layout (little-endian): "MILC" | u32 version=1 | u32 count |
//   per tensor: u16 name_len | name bytes | u8 rank | u32 dims[rank] | f32 payload (row-major)
std::vector<std::uint8_t> encode_checkpoint(const TensorMap& tensors);
TensorMap decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

/// Copies tensors named prefix+name into `into`, checking shapes. Tensors in the file with the
/// prefix but unknown to `into` are reported together in one ConfigError.
void restore_component(const TensorMap& file, const std::string& prefix, ParamSet<float>& into);

/// Extracts all tensors starting with prefix (prefix stripped).
TensorMap extract_component(const TensorMap& file, const std::string& prefix);

void append_component(TensorMap& out, const std::string& prefix, const ParamSet<float>& params);

}  // namespace patchmil::nn
