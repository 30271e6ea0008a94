#include "patchmil/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "patchmil/patching.hpp"

namespace patchmil::viz {

namespace {

std::uint8_t to_byte(double unit) { return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0)); }

}  // namespace

Rgb jet(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return {to_byte(1.5 - std::abs(4 * v - 3)), to_byte(1.5 - std::abs(4 * v - 2)), to_byte(1.5 - std::abs(4 * v - 1))};
}

RgbImage render_attention(const GraySlice& slice, std::span<const double> attention) {
  if (slice.width != kSliceSide || slice.height != kSliceSide)
    throw ValidationError("render_attention: expected a 512x512 slice");
  if (attention.size() != static_cast<std::size_t>(kBagSize))
    throw ValidationError("render_attention: expected 256 attention weights, got " + std::to_string(attention.size()));
  const double mx = *std::max_element(attention.begin(), attention.end());
  if (!(mx > 0)) throw ValidationError("render_attention: attention weights must have a positive maximum");
  std::vector<Rgb> colors(kBagSize);
  for (int k = 0; k < kBagSize; ++k) colors[k] = jet(attention[k] / mx);
  RgbImage img(slice.width, slice.height);
  for (std::uint32_t y = 0; y < slice.height; ++y)
    for (std::uint32_t x = 0; x < slice.width; ++x) {
      const double g = slice.at(y, x);
      const Rgb& c = colors[(y / kPatchSide) * kGridSide + x / kPatchSide];
      std::uint8_t* px = &img.data[(y * img.width + x) * 3];
      for (int ch = 0; ch < 3; ++ch)
        px[ch] = static_cast<std::uint8_t>(std::lround((1.0 - kOverlayAlpha) * g + kOverlayAlpha * c[ch]));
    }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw ValidationError("ppm: data length does not match dimensions");
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.data.begin(), image.data.end());
  return out;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  if (token() != "P6") throw FormatError("ppm: missing P6 magic");
  const unsigned long w = std::stoul(token()), h = std::stoul(token());
  if (token() != "255") throw FormatError("ppm: only maxval 255 supported");
  ++pos;  // single whitespace before the raster
  RgbImage img(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h));
  if (bytes.size() - pos != img.data.size()) throw FormatError("ppm: raster size mismatch");
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.data.begin());
  return img;
}

void write_attention_csv(std::span<const double> attention, const std::filesystem::path& path) {
  if (attention.size() != static_cast<std::size_t>(kBagSize)) throw ValidationError("attention csv: expected 256 weights");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (int c = 0; c < kGridSide; ++c) out << (c ? "," : "") << 'c' << c;
  out << '\n';
  out.precision(9);
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) out << (c ? "," : "") << attention[r * kGridSide + c];
    out << '\n';
  }
}

}  // namespace patchmil::viz
