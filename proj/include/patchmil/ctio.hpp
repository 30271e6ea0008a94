#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchmil {

/// Raised when a slice file, manifest or config does not match its declared format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when well-formed input violates a semantic rule (label consistency, ranges).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kSliceSide = 512;
inline constexpr std::int32_t kDefaultWindowLow = 0;
inline constexpr std::int32_t kDefaultWindowHigh = 80;

/// Raw CT slice in Hounsfield units with its display window [window_low, window_high].
struct HUSlice {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::int32_t window_low = kDefaultWindowLow;
  std::int32_t window_high = kDefaultWindowHigh;
  std::vector<std::int16_t> data;  // row-major

  std::int16_t at(std::uint32_t row, std::uint32_t col) const { return data[row * width + col]; }
  bool operator==(const HUSlice&) const = default;
};

/// Windowed 8-bit slice.
struct GraySlice {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> data;  // row-major

  std::uint8_t at(std::uint32_t row, std::uint32_t col) const { return data[row * width + col]; }
  bool operator==(const GraySlice&) const = default;
};

enum class Split { train, valid, test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::string slice_path;
  int bag_label = 0;
  std::optional<std::vector<std::uint8_t>> instance_labels;
  Split split = Split::train;
};

struct ClassCounts {
  std::size_t total = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// CTSL layout: "CTSL" | u32 version | u32 width | u32 height | i32 low | i32 high | i16 payload, all LE.
std::vector<std::uint8_t> encode_slice(const HUSlice& slice);
HUSlice decode_slice(const std::vector<std::uint8_t>& bytes);

HUSlice read_slice(const std::filesystem::path& path);
void write_slice(const HUSlice& slice, const std::filesystem::path& path);

/// Maps HU to [0,255]: clamp outside the window, linear inside, rounded half away from zero.
GraySlice apply_window(const HUSlice& slice);
std::uint8_t window_value(std::int32_t hu, std::int32_t low, std::int32_t high);

std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
std::string format_manifest_line(const ManifestEntry& entry);
void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Throws ValidationError when the split holds no entries.
ClassCounts class_counts(const std::vector<ManifestEntry>& entries, Split split);

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split split);

}  // namespace patchmil
