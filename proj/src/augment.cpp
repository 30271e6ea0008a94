#include "patchmil/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace patchmil {

namespace {

PatchInstance blank_like(const PatchInstance& patch) {
  PatchInstance out;
  out.grid_row = patch.grid_row;
  out.grid_col = patch.grid_col;
  return out;
}

}  // namespace

PatchInstance crop_at(const PatchInstance& patch, CropOffset offset) {
  PatchInstance out = blank_like(patch);
  for (int c = 0; c < kChannels; ++c)
    for (int y = 0; y < kPatchSide; ++y) {
      const int sy = y + offset.dy - kCropPad;
      if (sy < 0 || sy >= kPatchSide) continue;
      for (int x = 0; x < kPatchSide; ++x) {
        const int sx = x + offset.dx - kCropPad;
        if (sx >= 0 && sx < kPatchSide) out.at(c, y, x) = patch.at(c, sy, sx);
      }
    }
  return out;
}

PatchInstance rotate_by(const PatchInstance& patch, double degrees) {
  if (degrees == 0.0) return patch;
  PatchInstance out = blank_like(patch);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  constexpr double center = (kPatchSide - 1) / 2.0;
  for (int y = 0; y < kPatchSide; ++y)
    for (int x = 0; x < kPatchSide; ++x) {
      // Inverse map: output (y,x) samples the source rotated by -theta about the center.
      // Positive angles turn content counterclockwise as displayed (rows grow downward).
      const double ry = y - center;
      const double rx = x - center;
      const double sx = cs * rx - sn * ry + center;
      const double sy = sn * rx + cs * ry + center;
      const double fy = std::floor(sy);
      const double fx = std::floor(sx);
      const int y0 = static_cast<int>(fy);
      const int x0 = static_cast<int>(fx);
      const double wy = sy - fy;
      const double wx = sx - fx;
      for (int c = 0; c < kChannels; ++c) {
        auto sample = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= kPatchSide || xx < 0 || xx >= kPatchSide) return 0.0;
          return patch.at(c, yy, xx);
        };
        const double v = (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                         wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return out;
}

PatchInstance flip_columns(const PatchInstance& patch) {
  PatchInstance out = blank_like(patch);
  for (int c = 0; c < kChannels; ++c)
    for (int y = 0; y < kPatchSide; ++y)
      for (int x = 0; x < kPatchSide; ++x) out.at(c, y, x) = patch.at(c, y, kPatchSide - 1 - x);
  return out;
}

PatchInstance cutout_at(const PatchInstance& patch, const std::vector<CutoutBox>& boxes) {
  PatchInstance out = patch;
  for (const auto& box : boxes)
    for (int c = 0; c < kChannels; ++c)
      for (int y = box.top; y < box.top + kCutoutSide; ++y)
        for (int x = box.left; x < box.left + kCutoutSide; ++x) out.at(c, y, x) = 0.0f;
  return out;
}

std::pair<PatchInstance, CropOffset> random_crop(const PatchInstance& patch, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 2 * kCropPad);
  CropOffset off;
  off.dy = pick(rng);
  off.dx = pick(rng);
  return {crop_at(patch, off), off};
}

std::pair<PatchInstance, double> rotate(const PatchInstance& patch, Rng& rng) {
  std::uniform_real_distribution<double> pick(-kMaxRotationDeg, kMaxRotationDeg);
  const double angle = pick(rng);
  return {rotate_by(patch, angle), angle};
}

std::pair<PatchInstance, bool> hflip(const PatchInstance& patch, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  const bool flipped = coin(rng);
  return {flipped ? flip_columns(patch) : patch, flipped};
}

std::pair<PatchInstance, std::vector<CutoutBox>> cutout(const PatchInstance& patch, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, kPatchSide - kCutoutSide);
  std::vector<CutoutBox> boxes(kCutoutBoxes);
  for (auto& b : boxes) {
    b.top = pick(rng);
    b.left = pick(rng);
  }
  return {cutout_at(patch, boxes), boxes};
}

namespace {

std::pair<PatchInstance, AugRecord> one_view(const PatchInstance& patch, Rng& rng) {
  AugRecord rec;
  auto [cropped, off] = random_crop(patch, rng);
  rec.crop_offset = off;
  auto [rotated, angle] = rotate(cropped, rng);
  rec.rotation_deg = angle;
  auto [flipped, did_flip] = hflip(rotated, rng);
  rec.flipped = did_flip;
  auto [masked, boxes] = cutout(flipped, rng);
  rec.cutout_boxes = std::move(boxes);
  return {std::move(masked), std::move(rec)};
}

PatchInstance reconstruction_target(const PatchInstance& patch, const AugRecord& rec) {
  PatchInstance t = rotate_by(patch, rec.rotation_deg);
  return rec.flipped ? flip_columns(t) : t;
}

}  // namespace

ViewPair make_views(const PatchInstance& patch, Rng& rng) {
  ViewPair vp;
  std::tie(vp.view1, vp.record1) = one_view(patch, rng);
  std::tie(vp.view2, vp.record2) = one_view(patch, rng);
  vp.rec1 = reconstruction_target(patch, vp.record1);
  vp.rec2 = reconstruction_target(patch, vp.record2);
  return vp;
}

TransformVector encode_transform(const AugRecord& record) {
  return {record.crop_offset.dy / 8.0,
          record.crop_offset.dx / 8.0,
          record.rotation_deg / kMaxRotationDeg,
          record.flipped ? 1.0 : 0.0,
          static_cast<double>(record.cutout_boxes.size()) / kCutoutBoxes,
          1.0};
}

}  // namespace patchmil
