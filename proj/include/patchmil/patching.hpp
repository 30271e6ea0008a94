#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "patchmil/ctio.hpp"

namespace patchmil {

inline constexpr int kPatchSide = 32;
inline constexpr int kChannels = 3;
inline constexpr int kGridSide = 16;
inline constexpr int kBagSize = kGridSide * kGridSide;
inline constexpr int kPatchPixels = kPatchSide * kPatchSide;
inline constexpr int kInstanceValues = kChannels * kPatchPixels;

/// 32x32 grayscale tile cut from a windowed slice.
using Tile = std::array<std::uint8_t, kPatchPixels>;

/// One MIL instance: channel-major 3x32x32 values in [0,1], channels identical.
struct PatchInstance {
  std::array<float, kInstanceValues> data{};
  int grid_row = 0;
  int grid_col = 0;

  float& at(int c, int y, int x) { return data[(c * kPatchSide + y) * kPatchSide + x]; }
  float at(int c, int y, int x) const { return data[(c * kPatchSide + y) * kPatchSide + x]; }
};

/// A slice as a bag of 256 instances in row-major grid order.
struct Bag {
  std::vector<PatchInstance> instances;
  int label = 0;
  std::optional<std::vector<std::uint8_t>> oracle_instance_labels;
};

/// Tile k covers rows [32*(k/16), +32) and cols [32*(k%16), +32). Requires a 512x512 slice.
std::vector<Tile> split_into_patches(const GraySlice& slice);

PatchInstance to_instance(const Tile& tile, int grid_row = 0, int grid_col = 0);

/// Instance k of the bag without materializing the other 255.
PatchInstance extract_instance(const GraySlice& slice, int k);

/// True when every pixel of tile k has the same intensity.
bool tile_is_constant(const GraySlice& slice, int k);

Bag make_bag(const GraySlice& slice, const ManifestEntry& entry);

/// Y = 0 iff no instance label is set.
int bag_label_from_instances(std::span<const std::uint8_t> labels);

}  // namespace patchmil
