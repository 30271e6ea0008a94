#include "patchmil/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "patchmil/ctio.hpp"

namespace patchmil::nn {

namespace {

constexpr char kMagic[4] = {'M', 'I', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TensorMap& tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& name = tensors.name(i);
    const auto& t = tensors.at(i);
    if (name.size() > 0xffff) throw ConfigError("tensor name too long: " + name.substr(0, 32));
    if (t.shape.size() > 0xff) throw ConfigError("tensor rank too large: " + name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorMap decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  Reader r(bytes);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("name length");
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint8_t>("rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.get<std::uint32_t>("dims");
    Tensor<float> t(dims);
    r.need(t.numel() * 4, "payload");
    for (auto& v : t.values) v = std::bit_cast<float>(r.get<std::uint32_t>("payload"));
    out.add(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void restore_component(const TensorMap& file, const std::string& prefix, ParamSet<float>& into) {
  std::string unknown;
  for (std::size_t i = 0; i < file.size(); ++i) {
    const auto& name = file.name(i);
    if (!name.starts_with(prefix)) continue;
    const std::string local = name.substr(prefix.size());
    if (!into.contains(local)) {
      unknown += (unknown.empty() ? "" : ", ") + name;
      continue;
    }
    auto& dst = into[local];
    if (dst.shape != file.at(i).shape) throw ConfigError("checkpoint: shape mismatch for '" + name + "'");
    dst.values = file.at(i).values;
  }
  if (!unknown.empty()) throw ConfigError("checkpoint: unknown tensors: " + unknown);
  for (std::size_t i = 0; i < into.size(); ++i)
    if (!file.contains(prefix + into.name(i)))
      throw ConfigError("checkpoint: missing tensor '" + prefix + into.name(i) + "'");
}

TensorMap extract_component(const TensorMap& file, const std::string& prefix) {
  TensorMap out;
  for (std::size_t i = 0; i < file.size(); ++i)
    if (file.name(i).starts_with(prefix)) out.add(file.name(i).substr(prefix.size()), file.at(i));
  return out;
}

void append_component(TensorMap& out, const std::string& prefix, const ParamSet<float>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) out.add(prefix + params.name(i), params.at(i));
}

}  // namespace patchmil::nn
