#include "patchmil/patching.hpp"

#include <algorithm>
#include <string>

namespace patchmil {

std::vector<Tile> split_into_patches(const GraySlice& slice) {
  if (slice.width != kSliceSide || slice.height != kSliceSide)
    throw ValidationError("slice: expected 512x512, got " + std::to_string(slice.width) + "x" +
                          std::to_string(slice.height));
  std::vector<Tile> tiles(kBagSize);
  for (int k = 0; k < kBagSize; ++k) {
    const int row0 = kPatchSide * (k / kGridSide);
    const int col0 = kPatchSide * (k % kGridSide);
    for (int y = 0; y < kPatchSide; ++y) {
      const auto* src = slice.data.data() + static_cast<std::size_t>(row0 + y) * slice.width + col0;
      std::copy_n(src, kPatchSide, tiles[k].begin() + y * kPatchSide);
    }
  }
  return tiles;
}

PatchInstance extract_instance(const GraySlice& slice, int k) {
  if (slice.width != kSliceSide || slice.height != kSliceSide)
    throw ValidationError("slice: expected 512x512, got " + std::to_string(slice.width) + "x" +
                          std::to_string(slice.height));
  if (k < 0 || k >= kBagSize) throw ValidationError("tile index out of range: " + std::to_string(k));
  Tile tile;
  const int row0 = kPatchSide * (k / kGridSide);
  const int col0 = kPatchSide * (k % kGridSide);
  for (int y = 0; y < kPatchSide; ++y) {
    const auto* src = slice.data.data() + static_cast<std::size_t>(row0 + y) * slice.width + col0;
    std::copy_n(src, kPatchSide, tile.begin() + y * kPatchSide);
  }
  return to_instance(tile, k / kGridSide, k % kGridSide);
}

bool tile_is_constant(const GraySlice& slice, int k) {
  const auto tile = extract_instance(slice, k);
  return std::all_of(tile.data.begin(), tile.data.end(), [&](float v) { return v == tile.data[0]; });
}

PatchInstance to_instance(const Tile& tile, int grid_row, int grid_col) {
  PatchInstance p;
  p.grid_row = grid_row;
  p.grid_col = grid_col;
  for (int i = 0; i < kPatchPixels; ++i) {
    const float v = static_cast<float>(tile[i]) / 255.0f;
    for (int c = 0; c < kChannels; ++c) p.data[c * kPatchPixels + i] = v;
  }
  return p;
}

Bag make_bag(const GraySlice& slice, const ManifestEntry& entry) {
  const auto tiles = split_into_patches(slice);
  Bag bag;
  bag.label = entry.bag_label;
  bag.instances.reserve(tiles.size());
  for (int k = 0; k < kBagSize; ++k) bag.instances.push_back(to_instance(tiles[k], k / kGridSide, k % kGridSide));
  bag.oracle_instance_labels = entry.instance_labels;
  return bag;
}

int bag_label_from_instances(std::span<const std::uint8_t> labels) {
  return std::any_of(labels.begin(), labels.end(), [](std::uint8_t y) { return y != 0; }) ? 1 : 0;
}

}  // namespace patchmil
