#include "patchmil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "patchmil/patching.hpp"

namespace patchmil::synth {

std::string to_string(Task task) { return task == Task::blob ? "blob" : "core"; }

Task parse_task(const std::string& name) {
  if (name == "blob") return Task::blob;
  if (name == "core") return Task::core;
  throw ValidationError("task: expected blob or core, got '" + name + "'");
}

GenConfig GenConfig::defaults(Task task) {
  GenConfig c;
  c.task = task;
  const double ratio = task == Task::blob ? 1363.0 / 8072.0 : 678.0 / 8072.0;
  const int sizes[3] = {800, 100, 100};
  for (int s = 0; s < 3; ++s) {
    const int pos = static_cast<int>(std::lround(sizes[s] * ratio));
    c.counts[s] = {pos, sizes[s] - pos};
  }
  return c;
}

GenConfig gen_config_from(const KeyValues& kv, const std::string& prefix) {
  const Task task = parse_task(kv.get_string(prefix + "task", "blob"));
  GenConfig c = GenConfig::defaults(task);
  for (Split s : {Split::train, Split::valid, Split::test}) {
    auto& n = c.counts[static_cast<int>(s)];
    n.positive = static_cast<int>(kv.get_int(prefix + to_string(s) + "_positive", n.positive));
    n.negative = static_cast<int>(kv.get_int(prefix + to_string(s) + "_negative", n.negative));
  }
  auto range = [&](const std::string& name, HuRange& r) {
    r.low = static_cast<int>(kv.get_int(prefix + name + "_hu_low", r.low));
    r.high = static_cast<int>(kv.get_int(prefix + name + "_hu_high", r.high));
  };
  range("blob", c.blob_hu);
  range("core", c.core_hu);
  range("brain", c.brain_hu);
  c.blob_radius_min = static_cast<int>(kv.get_int(prefix + "blob_radius_min", c.blob_radius_min));
  c.blob_radius_max = static_cast<int>(kv.get_int(prefix + "blob_radius_max", c.blob_radius_max));
  c.core_scale_min = kv.get_double(prefix + "core_scale_min", c.core_scale_min);
  c.core_scale_max = kv.get_double(prefix + "core_scale_max", c.core_scale_max);
  c.window_low = static_cast<int>(kv.get_int(prefix + "window_low", c.window_low));
  c.window_high = static_cast<int>(kv.get_int(prefix + "window_high", c.window_high));
  c.seed = kv.get_u64(prefix + "seed", c.seed);
  validate(c);
  return c;
}

void validate(const GenConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
  };
  require(c.window_low < c.window_high, "window_low must be below window_high");
  for (const auto& [name, r] : {std::pair{"blob_hu", c.blob_hu}, {"core_hu", c.core_hu}, {"brain_hu", c.brain_hu}}) {
    require(r.low <= r.high, std::string(name) + ": low must not exceed high");
    require(r.low >= c.window_low && r.high <= c.window_high,
            std::string(name) + ": range must lie inside the window [" + std::to_string(c.window_low) + ", " +
                std::to_string(c.window_high) + "]");
  }
  require(c.blob_radius_min >= 20 && c.blob_radius_max <= 80 && c.blob_radius_min <= c.blob_radius_max,
          "blob_radius_min/blob_radius_max must satisfy 20 <= min <= max <= 80");
  require(c.core_scale_min > 0 && c.core_scale_max < 1 && c.core_scale_min <= c.core_scale_max,
          "core_scale_min/core_scale_max must satisfy 0 < min <= max < 1");
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const auto& n = c.counts[static_cast<int>(s)];
    require(n.positive >= 0 && n.negative >= 0, to_string(s) + "_positive/_negative must be >= 0");
  }
}

namespace {

constexpr int kSide = static_cast<int>(kSliceSide);
constexpr double kCenter = 255.5;
// Skull: elliptical annulus; brain: its interior.
constexpr double kSkullRy = 230.0, kSkullRx = 200.0, kSkullThickness = 14.0;
constexpr double kBrainRy = kSkullRy - kSkullThickness, kBrainRx = kSkullRx - kSkullThickness;

struct Ellipse {
  double cy, cx, ry, rx, angle;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy;   // along rx
    const double v = -s * dx + c * dy;  // along ry
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
  }
};

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Blob placed so its circumscribing circle stays inside the brain.
Ellipse place_blob(const GenConfig& c, Rng& rng) {
  const double ry = uniform_int(rng, c.blob_radius_min, c.blob_radius_max);
  const double rx = uniform_int(rng, c.blob_radius_min, c.blob_radius_max);
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const double r = std::max(ry, rx);
  for (;;) {
    const double cy = uniform(rng, kCenter - kBrainRy + r, kCenter + kBrainRy - r);
    const double cx = uniform(rng, kCenter - kBrainRx + r, kCenter + kBrainRx - r);
    const double ny = (cy - kCenter) / (kBrainRy - r), nx = (cx - kCenter) / (kBrainRx - r);
    if (ny * ny + nx * nx <= 1.0) return {cy, cx, ry, rx, angle};
  }
}

/// Same orientation, radii scaled by f, center offset by at most (1 - f) in blob-normalized units.
Ellipse place_core(const GenConfig& c, const Ellipse& blob, Rng& rng) {
  const double f = uniform(rng, c.core_scale_min, c.core_scale_max);
  double tu, tv;
  do {
    tu = uniform(rng, -1.0, 1.0);
    tv = uniform(rng, -1.0, 1.0);
  } while (tu * tu + tv * tv > 1.0);
  tu *= 1.0 - f;
  tv *= 1.0 - f;
  const double co = std::cos(blob.angle), si = std::sin(blob.angle);
  const double du = tu * blob.rx, dv = tv * blob.ry;
  return {blob.cy + si * du + co * dv, blob.cx + co * du - si * dv, blob.ry * f, blob.rx * f, blob.angle};
}

std::vector<std::uint8_t> rasterize(const Ellipse& e) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(kSide) * kSide, 0);
  const int r = static_cast<int>(std::ceil(std::max(e.ry, e.rx))) + 1;
  for (int y = std::max(0, static_cast<int>(e.cy) - r); y <= std::min(kSide - 1, static_cast<int>(e.cy) + r); ++y)
    for (int x = std::max(0, static_cast<int>(e.cx) - r); x <= std::min(kSide - 1, static_cast<int>(e.cx) + r); ++x)
      if (e.contains(y, x)) mask[static_cast<std::size_t>(y) * kSide + x] = 1;
  return mask;
}

bool any(const std::vector<std::uint8_t>& v) {
  return std::any_of(v.begin(), v.end(), [](std::uint8_t b) { return b != 0; });
}

}  // namespace

std::vector<std::uint8_t> instance_labels_from_mask(const std::vector<std::uint8_t>& mask) {
  if (mask.size() != static_cast<std::size_t>(kSide) * kSide) throw ValidationError("mask: expected 512x512");
  std::vector<int> counts(kBagSize, 0);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x)
      counts[(y / kPatchSide) * kGridSide + x / kPatchSide] += mask[static_cast<std::size_t>(y) * kSide + x];
  std::vector<std::uint8_t> labels(kBagSize);
  // count / 1024 >= 5 / 100, in integers
  for (int k = 0; k < kBagSize; ++k) labels[k] = counts[k] * 100 >= 5 * kPatchPixels ? 1 : 0;
  return labels;
}

GeneratedSlice gen_slice(const GenConfig& c, Rng& rng, bool positive) {
  const bool with_blob = c.task == Task::core || positive;
  const bool with_core = c.task == Task::core && positive;
  Ellipse blob{}, core{};
  std::vector<std::uint8_t> labels(kBagSize, 0);
  if (with_blob) {
    // redraw until the label-defining region covers >= 5% of some patch
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("gen_slice: could not place a labelled region");
      blob = place_blob(c, rng);
      if (with_core) core = place_core(c, blob, rng);
      if (!positive) break;
      labels = instance_labels_from_mask(rasterize(with_core ? core : blob));
      if (any(labels)) break;
    }
  }

  GeneratedSlice out;
  out.slice.width = out.slice.height = kSliceSide;
  out.slice.window_low = c.window_low;
  out.slice.window_high = c.window_high;
  out.slice.data.assign(static_cast<std::size_t>(kSide) * kSide, -1000);
  out.blob_count = with_blob ? 1 : 0;
  std::uniform_int_distribution<int> skull_hu(900, 1100), brain(c.brain_hu.low, c.brain_hu.high),
      blob_hu(c.blob_hu.low, c.blob_hu.high), core_hu(c.core_hu.low, c.core_hu.high);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double dy = y - kCenter, dx = x - kCenter;
      const double outer = dy * dy / (kSkullRy * kSkullRy) + dx * dx / (kSkullRx * kSkullRx);
      const double inner = dy * dy / (kBrainRy * kBrainRy) + dx * dx / (kBrainRx * kBrainRx);
      int hu = -1000;
      if (inner <= 1.0) {
        hu = brain(rng);
        if (with_blob && blob.contains(y, x)) hu = with_core && core.contains(y, x) ? core_hu(rng) : blob_hu(rng);
      } else if (outer <= 1.0) {
        hu = skull_hu(rng);
      }
      out.slice.data[static_cast<std::size_t>(y) * kSide + x] = static_cast<std::int16_t>(hu);
    }
  out.instance_labels = std::move(labels);
  return out;
}

std::vector<ManifestEntry> gen_dataset(const GenConfig& config, const std::filesystem::path& out_dir) {
  validate(config);
  std::filesystem::create_directories(out_dir / "slices");
  std::vector<ManifestEntry> entries;
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const int split_id = static_cast<int>(s);
    const auto& n = config.counts[split_id];
    std::vector<int> labels(n.total(), 0);
    std::fill_n(labels.begin(), n.positive, 1);
    std::seed_seq order_seed{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                             static_cast<std::uint32_t>(split_id), 0x6f72u};
    Rng order_rng(order_seed);
    std::shuffle(labels.begin(), labels.end(), order_rng);
    for (int i = 0; i < n.total(); ++i) {
      // Per-slice stream: slices can be generated in any order with identical bytes.
      std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                        static_cast<std::uint32_t>(split_id), static_cast<std::uint32_t>(i)};
      Rng rng(seq);
      auto g = gen_slice(config, rng, labels[i] == 1);
      char name[32];
      std::snprintf(name, sizeof name, "%s_%04d.ctsl", to_string(s).c_str(), i);
      const std::string rel = std::string("slices/") + name;
      write_slice(g.slice, out_dir / rel);
      ManifestEntry e;
      e.slice_path = rel;
      e.bag_label = labels[i];
      e.instance_labels = std::move(g.instance_labels);
      e.split = s;
      entries.push_back(std::move(e));
    }
  }
  save_manifest(entries, out_dir / "manifest.jsonl");
  return entries;
}

}  // namespace patchmil::synth
