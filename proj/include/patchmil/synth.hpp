#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchmil/augment.hpp"
#include "patchmil/config.hpp"
#include "patchmil/ctio.hpp"

namespace patchmil::synth {

/// blob: label = blob present. core: every slice has a blob, label = dark core inside it.
enum class Task { blob, core };

std::string to_string(Task task);
Task parse_task(const std::string& name);

struct SplitCounts {
  int positive = 0;
  int negative = 0;
  int total() const { return positive + negative; }
};

struct HuRange {
  int low = 0;
  int high = 0;  // inclusive
};

struct GenConfig {
  Task task = Task::blob;
  std::array<SplitCounts, 3> counts{};  // indexed by Split
  HuRange blob_hu{50, 70};
  HuRange core_hu{5, 20};
  HuRange brain_hu{20, 40};
  int blob_radius_min = 20;
  int blob_radius_max = 80;
  double core_scale_min = 0.3;  // core radii as a fraction of the blob radii
  double core_scale_max = 0.6;
  int window_low = 0;
  int window_high = 80;
  std::uint64_t seed = 0;

  /// 800/100/100 slices with the Table 3 positive ratio of the matching dataset
  /// (1363/8072 for blob, 678/8072 for core).
  static GenConfig defaults(Task task);
};

/// Reads `task`, `seed`, `<split>_positive`, `<split>_negative`, `blob_hu_low`, ... from key=value settings.
GenConfig gen_config_from(const KeyValues& kv, const std::string& prefix = "");
void validate(const GenConfig& config);

inline constexpr double kInstanceOverlap = 0.05;

struct GeneratedSlice {
  HUSlice slice;
  std::vector<std::uint8_t> instance_labels;  // 256, grid order
  int blob_count = 0;
};

GeneratedSlice gen_slice(const GenConfig& config, Rng& rng, bool positive);

/// y_k = 1 iff at least 5% of patch k's pixels are set in `mask` (512x512, row-major).
std::vector<std::uint8_t> instance_labels_from_mask(const std::vector<std::uint8_t>& mask);

/// Writes <out>/slices/*.ctsl and <out>/manifest.jsonl; returns the manifest entries.
std::vector<ManifestEntry> gen_dataset(const GenConfig& config, const std::filesystem::path& out_dir);

}  // namespace patchmil::synth
