#pragma once

#include <filesystem>
#include <vector>

#include "patchmil/ctio.hpp"
#include "patchmil/patching.hpp"

namespace patchmil {

/// Windowed slices of one dataset, kept as 8-bit planes; bags are materialized on demand.
struct SliceRecord {
  GraySlice slice;
  ManifestEntry entry;
};

class BagSet {
 public:
  BagSet() = default;
  explicit BagSet(std::vector<SliceRecord> records) : records_(std::move(records)) {}

  /// Reads and windows every manifest entry (slice paths relative to the manifest directory).
  static BagSet load(const std::filesystem::path& manifest_path);
  static BagSet load(const std::vector<ManifestEntry>& entries, const std::filesystem::path& root);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const SliceRecord& record(std::size_t i) const { return records_[i]; }
  int label(std::size_t i) const { return records_[i].entry.bag_label; }
  Bag bag(std::size_t i) const { return make_bag(records_[i].slice, records_[i].entry); }

  BagSet subset(Split split) const;
  std::vector<ManifestEntry> entries() const;

 private:
  std::vector<SliceRecord> records_;
};

/// Packs instances back to back as the encoder expects (n x 3x32x32).
std::vector<float> flatten_instances(const std::vector<PatchInstance>& instances);

}  // namespace patchmil
