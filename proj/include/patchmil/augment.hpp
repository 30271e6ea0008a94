#pragma once

#include <array>
#include <random>
#include <utility>
#include <vector>

#include "patchmil/patching.hpp"

namespace patchmil {

using Rng = std::mt19937_64;

inline constexpr int kCropPad = 4;
inline constexpr int kCutoutBoxes = 3;
inline constexpr int kCutoutSide = 4;
inline constexpr double kMaxRotationDeg = 10.0;
inline constexpr int kTransformDim = 6;

struct CropOffset {
  int dy = kCropPad;
  int dx = kCropPad;
};

struct CutoutBox {
  int top = 0;
  int left = 0;
};

struct AugRecord {
  CropOffset crop_offset;
  double rotation_deg = 0.0;
  bool flipped = false;
  std::vector<CutoutBox> cutout_boxes;
};

using TransformVector = std::array<double, kTransformDim>;

// Deterministic primitives. Each applies the same map to all channels.
PatchInstance crop_at(const PatchInstance& patch, CropOffset offset);
PatchInstance rotate_by(const PatchInstance& patch, double degrees);
PatchInstance flip_columns(const PatchInstance& patch);
PatchInstance cutout_at(const PatchInstance& patch, const std::vector<CutoutBox>& boxes);

// Random draws. Zero-pads by 4 px and takes a 32x32 window at a uniform offset in [0,8]^2.
std::pair<PatchInstance, CropOffset> random_crop(const PatchInstance& patch, Rng& rng);
/// Angle uniform in [-10, 10] degrees about the patch center; bilinear, zero fill.
std::pair<PatchInstance, double> rotate(const PatchInstance& patch, Rng& rng);
/// Mirrors columns with probability 0.5.
std::pair<PatchInstance, bool> hflip(const PatchInstance& patch, Rng& rng);
/// Zeroes three independently placed 4x4 boxes (overlap allowed).
std::pair<PatchInstance, std::vector<CutoutBox>> cutout(const PatchInstance& patch, Rng& rng);

struct ViewPair {
  PatchInstance view1;
  PatchInstance view2;
  PatchInstance rec1;  // rotation + flip of the original with view1's parameters
  PatchInstance rec2;
  AugRecord record1;
  AugRecord record2;
};

/// Two independent crop -> rotate -> flip -> cutout chains plus their reconstruction targets.
ViewPair make_views(const PatchInstance& patch, Rng& rng);

/// [dy/8, dx/8, angle/10, flipped, n_cutout/3, 1]
TransformVector encode_transform(const AugRecord& record);

}  // namespace patchmil
