#include "patchmil/dataset.hpp"

#include <algorithm>

namespace patchmil {

BagSet BagSet::load(const std::filesystem::path& manifest_path) {
  return load(load_manifest(manifest_path), manifest_path.parent_path());
}

BagSet BagSet::load(const std::vector<ManifestEntry>& entries, const std::filesystem::path& root) {
  std::vector<SliceRecord> records;
  records.reserve(entries.size());
  for (const auto& e : entries) records.push_back({apply_window(read_slice(root / e.slice_path)), e});
  return BagSet(std::move(records));
}

BagSet BagSet::subset(Split split) const {
  std::vector<SliceRecord> out;
  for (const auto& r : records_)
    if (r.entry.split == split) out.push_back(r);
  return BagSet(std::move(out));
}

std::vector<ManifestEntry> BagSet::entries() const {
  std::vector<ManifestEntry> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.entry);
  return out;
}

std::vector<float> flatten_instances(const std::vector<PatchInstance>& instances) {
  std::vector<float> out(instances.size() * kInstanceValues);
  for (std::size_t i = 0; i < instances.size(); ++i)
    std::copy(instances[i].data.begin(), instances[i].data.end(), out.begin() + i * kInstanceValues);
  return out;
}

}  // namespace patchmil
