#include "patchmil/ctio.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace patchmil {

namespace {

constexpr std::array<char, 4> kSliceMagic{'C', 'T', 'S', 'L'};
constexpr std::uint32_t kSliceVersion = 1;
constexpr std::size_t kSliceHeaderBytes = 4 + 4 * 5;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw ValidationError("split: unknown value '" + name + "' (expected train|valid|test)");
}

std::vector<std::uint8_t> encode_slice(const HUSlice& slice) {
  if (slice.window_low >= slice.window_high)
    throw ValidationError("window_low: must be below window_high");
  if (slice.data.size() != std::size_t{slice.width} * slice.height)
    throw ValidationError("data: length does not equal width*height");
  std::vector<std::uint8_t> out;
  out.reserve(kSliceHeaderBytes + slice.data.size() * 2);
  out.insert(out.end(), kSliceMagic.begin(), kSliceMagic.end());
  put_u32(out, kSliceVersion);
  put_u32(out, slice.width);
  put_u32(out, slice.height);
  put_u32(out, static_cast<std::uint32_t>(slice.window_low));
  put_u32(out, static_cast<std::uint32_t>(slice.window_high));
  for (std::int16_t v : slice.data) {
    const auto u = static_cast<std::uint16_t>(v);
    out.push_back(static_cast<std::uint8_t>(u & 0xff));
    out.push_back(static_cast<std::uint8_t>(u >> 8));
  }
  return out;
}

HUSlice decode_slice(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kSliceHeaderBytes) throw FormatError("header: truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kSliceMagic.data(), 4) != 0) throw FormatError("magic: expected \"CTSL\"");
  const std::uint8_t* p = bytes.data() + 4;
  if (get_u32(p) != kSliceVersion) throw FormatError("version: unsupported " + std::to_string(get_u32(p)));
  HUSlice s;
  s.width = get_u32(p + 4);
  s.height = get_u32(p + 8);
  s.window_low = static_cast<std::int32_t>(get_u32(p + 12));
  s.window_high = static_cast<std::int32_t>(get_u32(p + 16));
  if (s.window_low >= s.window_high) throw FormatError("window_low: must be below window_high");
  const std::size_t count = std::size_t{s.width} * s.height;
  if (bytes.size() != kSliceHeaderBytes + 2 * count)
    throw FormatError("payload: expected " + std::to_string(2 * count) + " bytes, found " +
                      std::to_string(bytes.size() - kSliceHeaderBytes));
  s.data.resize(count);
  const std::uint8_t* q = bytes.data() + kSliceHeaderBytes;
  for (std::size_t i = 0; i < count; ++i)
    s.data[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(q[2 * i] | (q[2 * i + 1] << 8)));
  return s;
}

HUSlice read_slice(const std::filesystem::path& path) {
  try {
    return decode_slice(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_slice(const HUSlice& slice, const std::filesystem::path& path) {
  const auto bytes = encode_slice(slice);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint8_t window_value(std::int32_t hu, std::int32_t low, std::int32_t high) {
  if (hu < low) return 0;
  if (hu > high) return 255;
  // Exact rational rounding of (hu-low)/(high-low)*255; the value is nonnegative.
  const std::int64_t num = std::int64_t{hu - low} * 255;
  const std::int64_t den = std::int64_t{high} - low;
  return static_cast<std::uint8_t>((2 * num + den) / (2 * den));
}

GraySlice apply_window(const HUSlice& slice) {
  if (slice.window_low >= slice.window_high) throw ValidationError("window_low: must be below window_high");
  GraySlice g{slice.width, slice.height, std::vector<std::uint8_t>(slice.data.size())};
  for (std::size_t i = 0; i < slice.data.size(); ++i)
    g.data[i] = window_value(slice.data[i], slice.window_low, slice.window_high);
  return g;
}

namespace {

ManifestEntry parse_entry(const nlohmann::json& j) {
  ManifestEntry e;
  if (!j.is_object()) throw FormatError("entry is not a JSON object");
  if (!j.contains("slice_path") || !j["slice_path"].is_string()) throw FormatError("slice_path: missing or not a string");
  e.slice_path = j["slice_path"].get<std::string>();
  if (!j.contains("bag_label") || !j["bag_label"].is_number_integer()) throw FormatError("bag_label: missing or not an integer");
  e.bag_label = j["bag_label"].get<int>();
  if (e.bag_label != 0 && e.bag_label != 1) throw ValidationError("bag_label: must be 0 or 1");
  if (!j.contains("split") || !j["split"].is_string()) throw FormatError("split: missing or not a string");
  e.split = parse_split(j["split"].get<std::string>());
  if (j.contains("instance_labels") && !j["instance_labels"].is_null()) {
    const auto& arr = j["instance_labels"];
    if (!arr.is_array()) throw FormatError("instance_labels: not an array");
    if (arr.size() != 256) throw ValidationError("instance_labels: expected 256 values, found " + std::to_string(arr.size()));
    std::vector<std::uint8_t> labels;
    labels.reserve(arr.size());
    bool any = false;
    for (const auto& v : arr) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
        throw ValidationError("instance_labels: values must be 0 or 1");
      labels.push_back(static_cast<std::uint8_t>(v.get<int>()));
      any = any || labels.back() != 0;
    }
    if (any != (e.bag_label == 1))
      throw ValidationError("bag_label: inconsistent with instance_labels (bag is positive iff any instance is)");
    e.instance_labels = std::move(labels);
  }
  return e;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      entries.push_back(parse_entry(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::string format_manifest_line(const ManifestEntry& entry) {
  nlohmann::json j;
  j["slice_path"] = entry.slice_path;
  j["bag_label"] = entry.bag_label;
  if (entry.instance_labels) {
    auto arr = nlohmann::json::array();
    for (auto v : *entry.instance_labels) arr.push_back(static_cast<int>(v));
    j["instance_labels"] = std::move(arr);
  }
  j["split"] = to_string(entry.split);
  return j.dump();
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& e : entries) out << format_manifest_line(e) << '\n';
}

ClassCounts class_counts(const std::vector<ManifestEntry>& entries, Split split) {
  ClassCounts c;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    ++c.total;
    if (e.bag_label == 1) ++c.positive; else ++c.negative;
  }
  if (c.total == 0) throw ValidationError("split '" + to_string(split) + "' is empty");
  return c;
}

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

}  // namespace patchmil
