#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchmil/ctio.hpp"

namespace patchmil::viz {

struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB triples

  RgbImage() = default;
  RgbImage(std::uint32_t w, std::uint32_t h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  const std::uint8_t* pixel(std::uint32_t row, std::uint32_t col) const { return &data[(row * width + col) * 3]; }
};

using Rgb = std::array<std::uint8_t, 3>;

/// Piecewise-linear jet; v is clamped to [0, 1].
Rgb jet(double v);

inline constexpr double kOverlayAlpha = 0.4;

/// Max-normalized attention, one 32x32 block per weight, blended as (1-alpha)*gray + alpha*jet.
RgbImage render_attention(const GraySlice& slice, std::span<const double> attention);

/// "P6\n<w> <h>\n255\n" followed by the raw RGB bytes.
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);

/// 16 rows of 16 comma-separated weights, preceded by a c0..c15 header.
void write_attention_csv(std::span<const double> attention, const std::filesystem::path& path);

}  // namespace patchmil::viz
