#pragma once

#include <atomic>
#include <cstdint>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "patchmil/ctio.hpp"
#include "patchmil/patching.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("patchmil_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

// Direct evaluation of the windowing map in floating point; the numerator is exact so one rounding happens.
inline int window_oracle(int hu, int a, int b) {
  if (hu < a) return 0;
  if (hu > b) return 255;
  return static_cast<int>(std::round(static_cast<double>(hu - a) * 255.0 / static_cast<double>(b - a)));
}

inline patchmil::HUSlice random_slice(std::mt19937_64& rng, std::uint32_t w = 512, std::uint32_t h = 512) {
  patchmil::HUSlice s;
  s.width = w;
  s.height = h;
  std::uniform_int_distribution<int> lo(-200, 100);
  s.window_low = lo(rng);
  s.window_high = s.window_low + std::uniform_int_distribution<int>(1, 300)(rng);
  std::uniform_int_distribution<int> hu(-32768, 32767);
  s.data.resize(static_cast<std::size_t>(w) * h);
  for (auto& v : s.data) v = static_cast<std::int16_t>(hu(rng));
  return s;
}

inline patchmil::GraySlice random_gray(std::mt19937_64& rng) {
  patchmil::GraySlice g;
  g.width = g.height = 512;
  g.data.resize(512 * 512);
  std::uniform_int_distribution<int> v(0, 255);
  for (auto& x : g.data) x = static_cast<std::uint8_t>(v(rng));
  return g;
}

inline patchmil::PatchInstance random_instance(std::mt19937_64& rng) {
  patchmil::PatchInstance p;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int y = 0; y < patchmil::kPatchSide; ++y)
    for (int x = 0; x < patchmil::kPatchSide; ++x) {
      const float v = u(rng);
      for (int c = 0; c < patchmil::kChannels; ++c) p.at(c, y, x) = v;
    }
  return p;
}

}  // namespace testing

#include "patchmil/dataset.hpp"
#include "patchmil/synth.hpp"

namespace testing {

/// In-memory bags from the synthetic generator.
inline patchmil::BagSet synthetic_bags(patchmil::synth::Task task, int positives, int negatives, std::uint64_t seed,
                                       patchmil::Split split = patchmil::Split::train) {
  using namespace patchmil;
  const auto cfg = synth::GenConfig::defaults(task);
  Rng rng(seed);
  std::vector<SliceRecord> records;
  for (int i = 0; i < positives + negatives; ++i) {
    const bool pos = i < positives;
    auto g = synth::gen_slice(cfg, rng, pos);
    ManifestEntry e{"mem_" + std::to_string(i), pos ? 1 : 0, g.instance_labels, split};
    records.push_back({apply_window(g.slice), std::move(e)});
  }
  return BagSet(std::move(records));
}

}  // namespace testing
