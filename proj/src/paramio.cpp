#include <bit>
#include <cstring>
#include <fstream>

#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/nn.hpp"

namespace dermaug {
namespace {

constexpr char kMagic[4] = {'D', 'M', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(&bytes_[pos_]), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DecodeError(pos_, "truncated parameter file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_params(const ParamSet& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put_le<std::uint64_t>(out, d);
  }
  for (const auto& [name, t] : params)
    for (double v : t.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParamSet deserialize_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DecodeError(0, "not a parameter file (bad magic)");
  Reader r(bytes.subspan(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw DecodeError(4, "unsupported parameter file version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ParamSet p;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    std::string name = r.get_string(len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DecodeError(4 + r.pos(), "implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t elems = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      elems *= d;
      if (elems > (std::size_t{1} << 32)) throw DecodeError(4 + r.pos(), "implausible tensor size");
    }
    p.add(std::move(name), Tensor(std::move(shape)));
  }
  for (auto& [name, t] : p)
    for (double& v : t.data) v = std::bit_cast<double>(r.get<std::uint64_t>());
  if (r.remaining() != 0) throw DecodeError(4 + r.pos(), "trailing bytes after parameter data");
  return p;
}

void save_params(const std::filesystem::path& path, const ParamSet& params) {
  const auto bytes = serialize_params(params);
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ParamSet load_params(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return deserialize_params(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(e.offset(), e.reason() + " in '" + path.string() + "'");
  }
}

}  // namespace dermaug
