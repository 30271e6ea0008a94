#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "patchmil/ctio.hpp"

using namespace patchmil;

namespace {

void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

std::string labels_json(const std::vector<int>& ones) {
  std::vector<int> v(256, 0);
  for (int k : ones) v[k] = 1;
  std::string s = "[";
  for (int i = 0; i < 256; ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

}  // namespace

TEST_CASE("slice round trip is byte exact") {
  std::mt19937_64 rng(11);
  testing::TempDir dir("ctio");
  for (int i = 0; i < 100; ++i) {
    const auto w = std::uniform_int_distribution<std::uint32_t>(1, 40)(rng);
    const auto h = std::uniform_int_distribution<std::uint32_t>(1, 40)(rng);
    const HUSlice s = testing::random_slice(rng, w, h);
    const auto path = dir / "s.ctsl";
    write_slice(s, path);
    const HUSlice back = read_slice(path);
    CHECK(back == s);
    CHECK(encode_slice(back) == encode_slice(s));
    CHECK(std::filesystem::file_size(path) == 24 + 2ull * w * h);
  }
}

TEST_CASE("hand-built CTSL bytes decode to the expected slice") {
  std::vector<std::uint8_t> bytes{'C', 'T', 'S', 'L'};
  put32(bytes, 1);
  put32(bytes, 512);
  put32(bytes, 512);
  put32(bytes, 0);
  put32(bytes, 80);
  const std::int16_t air = -1000;
  for (int i = 0; i < 512 * 512; ++i) {
    bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint16_t>(air) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint16_t>(air) >> 8));
  }
  const HUSlice s = decode_slice(bytes);
  CHECK(s.width == 512);
  CHECK(s.height == 512);
  CHECK(s.window_low == 0);
  CHECK(s.window_high == 80);
  CHECK(std::all_of(s.data.begin(), s.data.end(), [](std::int16_t v) { return v == -1000; }));
  CHECK(encode_slice(s) == bytes);
}

TEST_CASE("malformed slice files are rejected") {
  HUSlice s;
  s.width = s.height = 2;
  s.data = {1, 2, 3, 4};
  auto bytes = encode_slice(s);

  auto bad_magic = bytes;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK_THROWS_AS(decode_slice(bad_magic), FormatError);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_slice(truncated), FormatError);
  CHECK_THROWS_AS(decode_slice({'C', 'T'}), FormatError);

  auto window = bytes;
  window[16] = 90;  // window_low = 90 > window_high = 80
  CHECK_THROWS_WITH_AS(decode_slice(window), doctest::Contains("window_low"), FormatError);

  auto version = bytes;
  version[4] = 2;
  CHECK_THROWS_WITH_AS(decode_slice(version), doctest::Contains("version"), FormatError);

  testing::TempDir dir("ctio_bad");
  std::ofstream(dir / "x.ctsl", std::ios::binary) << "XXXXjunk";
  CHECK_THROWS_AS(read_slice(dir / "x.ctsl"), FormatError);
}

TEST_CASE("windowing boundaries and midpoint") {
  CHECK(window_value(-1, 0, 80) == 0);
  CHECK(window_value(81, 0, 80) == 255);
  CHECK(window_value(0, 0, 80) == 0);
  CHECK(window_value(80, 0, 80) == 255);
  CHECK(window_value(40, 0, 80) == 128);
  // 1/2 * 255 = 127.5 rounds away from zero
  CHECK(window_value(1, 0, 2) == 128);
}

TEST_CASE("windowing matches the scalar oracle, is monotone and spans [0,255]") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> hu(-32768, 32767), lo(-2000, 2000), span(1, 4000);
  for (int i = 0; i < 100000; ++i) {
    const int a = lo(rng), b = a + span(rng), v = hu(rng);
    REQUIRE(window_value(v, a, b) == testing::window_oracle(v, a, b));
  }
  for (int a : {-100, 0, 37}) {
    const int b = a + 77;
    int prev = 0;
    for (int v = a - 5; v <= b + 5; ++v) {
      const int g = window_value(v, a, b);
      CHECK(g >= prev);
      prev = g;
    }
    CHECK(window_value(a, a, b) == 0);
    CHECK(window_value(b, a, b) == 255);
  }

  HUSlice s = testing::random_slice(rng, 8, 8);
  const GraySlice g = apply_window(s);
  REQUIRE(g.data.size() == s.data.size());
  for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(g.data[i] == testing::window_oracle(s.data[i], s.window_low, s.window_high));
  s.window_high = s.window_low;
  CHECK_THROWS_AS(apply_window(s), ValidationError);
}

TEST_CASE("manifest parsing and bag label consistency") {
  const std::string neg_with_pos_label =
      R"({"slice_path":"a.ctsl","bag_label":1,"instance_labels":)" + labels_json({}) + R"(,"split":"train"})";
  CHECK_THROWS_AS(parse_manifest(neg_with_pos_label), ValidationError);

  const std::string one_pos =
      R"({"slice_path":"a.ctsl","bag_label":1,"instance_labels":)" + labels_json({17}) + R"(,"split":"valid"})";
  const auto e = parse_manifest(one_pos);
  REQUIRE(e.size() == 1);
  CHECK(e[0].bag_label == 1);
  CHECK(e[0].split == Split::valid);
  REQUIRE(e[0].instance_labels.has_value());
  CHECK((*e[0].instance_labels)[17] == 1);

  CHECK(parse_manifest("").empty());

  const std::string bad = R"({"slice_path":"a.ctsl","bag_label":0,"split":"train"})"
                          "\n{not json}\n";
  CHECK_THROWS_WITH_AS(parse_manifest(bad), doctest::Contains("line 2"), FormatError);
  CHECK_THROWS_AS(parse_manifest(R"({"slice_path":"a","bag_label":0,"split":"dev"})"), ValidationError);
  CHECK_THROWS_AS(parse_manifest(R"({"slice_path":"a","bag_label":2,"split":"test"})"), ValidationError);

  testing::TempDir dir("manifest");
  std::vector<ManifestEntry> entries(3);
  entries[0] = {"x.ctsl", 0, std::nullopt, Split::train};
  entries[1] = {"y.ctsl", 1, std::vector<std::uint8_t>(256, 0), Split::test};
  (*entries[1].instance_labels)[3] = 1;
  entries[2] = {"z.ctsl", 0, std::vector<std::uint8_t>(256, 0), Split::valid};
  save_manifest(entries, dir / "m.jsonl");
  const auto back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].slice_path == entries[i].slice_path);
    CHECK(back[i].bag_label == entries[i].bag_label);
    CHECK(back[i].instance_labels == entries[i].instance_labels);
    CHECK(back[i].split == entries[i].split);
  }
}

TEST_CASE("class counts") {
  auto make = [](int pos, int neg, Split split) {
    std::vector<ManifestEntry> v;
    for (int i = 0; i < pos; ++i) v.push_back({"p", 1, std::nullopt, split});
    for (int i = 0; i < neg; ++i) v.push_back({"n", 0, std::nullopt, split});
    return v;
  };
  const auto table3 = make(1363, 6709, Split::train);
  const auto c = class_counts(table3, Split::train);
  CHECK(c.total == 8072);
  CHECK(c.positive == 1363);
  CHECK(c.negative == 6709);

  const auto small = class_counts(make(1, 1, Split::test), Split::test);
  CHECK(small.total == 2);
  CHECK(small.positive == 1);
  CHECK(small.negative == 1);

  // 10 entries, 3 positive, counted by enumeration
  std::vector<ManifestEntry> ten;
  int expected_pos = 0;
  for (int i = 0; i < 10; ++i) {
    const int y = (i % 3 == 0 && i < 9) ? 1 : 0;
    expected_pos += y;
    ten.push_back({"e", y, std::nullopt, Split::valid});
  }
  const auto c10 = class_counts(ten, Split::valid);
  CHECK(c10.total == 10);
  CHECK(c10.positive == static_cast<std::size_t>(expected_pos));
  CHECK(c10.negative == 10 - static_cast<std::size_t>(expected_pos));
  CHECK(c10.total == c10.positive + c10.negative);

  CHECK_THROWS_AS(class_counts(ten, Split::train), ValidationError);
}
