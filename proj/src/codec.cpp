#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"

namespace dermaug {
namespace {

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

// --- PPM -------------------------------------------------------------------

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw DecodeError(start, std::string(field) + " too large");
      ++pos_;
    }
    if (pos_ == start) throw DecodeError(start, std::string("expected ") + field);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw DecodeError(0, "missing P6 magic");
  PpmHeaderReader r(bytes);
  r.advance(2);
  const long width = r.read_uint("width");
  const long height = r.read_uint("height");
  const std::size_t maxval_pos = r.pos();
  const long maxval = r.read_uint("maxval");
  if (width < 1 || height < 1) throw DecodeError(maxval_pos, "zero image dimension");
  if (maxval < 1 || maxval > 255)
    throw DecodeError(maxval_pos, "unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  if (r.pos() >= bytes.size()) throw DecodeError(r.pos(), "missing whitespace after header");
  r.advance(1);
  const std::size_t payload = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() - r.pos() < payload)
    throw DecodeError(bytes.size(), "truncated payload: expected " + std::to_string(payload) +
                                        " bytes, found " + std::to_string(bytes.size() - r.pos()));
  Image img(static_cast<int>(height), static_cast<int>(width));
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < payload; ++i) {
    const auto b = bytes[r.pos() + i];
    if (b > maxval) throw DecodeError(r.pos() + i, "sample exceeds maxval");
    img.pixels[i] = maxval == 255 ? b / 255.0 : b * scale;
  }
  return img;
}

// --- PNG -------------------------------------------------------------------

constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

std::vector<std::uint8_t> inflate_all(const std::vector<std::uint8_t>& z, std::size_t expected,
                                      std::size_t offset) {
  std::vector<std::uint8_t> out(expected);
  z_stream s{};
  if (inflateInit(&s) != Z_OK) throw DecodeError(offset, "zlib init failed");
  s.next_in = const_cast<Bytef*>(z.data());
  s.avail_in = static_cast<uInt>(z.size());
  s.next_out = out.data();
  s.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&s, Z_FINISH);
  const std::size_t produced = out.size() - s.avail_out;
  inflateEnd(&s);
  if (rc != Z_STREAM_END || produced != expected)
    throw DecodeError(offset, "corrupt or truncated image data (inflated " +
                                  std::to_string(produced) + " of " + std::to_string(expected) +
                                  " bytes)");
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()))
    throw DecodeError(0, "missing PNG signature");
  std::size_t pos = 8;
  std::uint32_t width = 0, height = 0;
  bool have_header = false, have_end = false;
  std::size_t first_idat = 0;
  std::vector<std::uint8_t> compressed;
  while (pos < bytes.size() && !have_end) {
    if (bytes.size() - pos < 12) throw DecodeError(pos, "truncated chunk header");
    const std::uint32_t len = read_be32(bytes, pos);
    if (bytes.size() - pos - 12 < len) throw DecodeError(pos, "truncated chunk");
    const auto type = bytes.subspan(pos + 4, 4);
    const auto data = bytes.subspan(pos + 8, len);
    const std::uint32_t crc = read_be32(bytes, pos + 8 + len);
    const auto actual = static_cast<std::uint32_t>(crc32(0L, type.data(), 4 + len));
    if (crc != actual) throw DecodeError(pos + 8 + len, "chunk CRC mismatch");
    const std::string name(type.begin(), type.end());
    if (name == "IHDR") {
      if (len != 13) throw DecodeError(pos, "bad IHDR length");
      width = read_be32(data, 0);
      height = read_be32(data, 4);
      if (width == 0 || height == 0 || width > 1u << 15 || height > 1u << 15)
        throw DecodeError(pos + 8, "unsupported image dimensions");
      if (data[8] != 8) throw DecodeError(pos + 16, "unsupported bit depth " + std::to_string(data[8]));
      if (data[9] != 2) throw DecodeError(pos + 17, "unsupported colour type (need 8-bit RGB)");
      if (data[10] != 0 || data[11] != 0) throw DecodeError(pos + 18, "unsupported compression/filter method");
      if (data[12] != 0) throw DecodeError(pos + 20, "interlaced PNG not supported");
      have_header = true;
    } else if (name == "IDAT") {
      if (!have_header) throw DecodeError(pos, "IDAT before IHDR");
      if (compressed.empty()) first_idat = pos;
      compressed.insert(compressed.end(), data.begin(), data.end());
    } else if (name == "IEND") {
      have_end = true;
    } else if ((type[0] & 0x20) == 0) {
      throw DecodeError(pos, "unsupported critical chunk " + name);
    }
    pos += 12 + len;
  }
  if (!have_header) throw DecodeError(pos, "missing IHDR");
  if (compressed.empty()) throw DecodeError(pos, "missing IDAT");
  if (!have_end) throw DecodeError(bytes.size(), "missing IEND (truncated file)");

  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  const auto raw = inflate_all(compressed, (stride + 1) * height, first_idat);
  std::vector<std::uint8_t> cur(stride), prev(stride, 0);
  Image img(static_cast<int>(height), static_cast<int>(width));
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* line = &raw[y * (stride + 1) + 1];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? cur[i - 3] : 0;
      const int b = prev[i];
      const int c = i >= 3 ? prev[i - 3] : 0;
      int v = line[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DecodeError(first_idat, "bad filter type on row " + std::to_string(y));
      }
      cur[i] = static_cast<std::uint8_t>(v);
    }
    for (std::size_t i = 0; i < stride; ++i) img.pixels[y * stride + i] = cur[i] / 255.0;
    std::swap(cur, prev);
  }
  return img;
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_be32(out, static_cast<std::uint32_t>(crc32(0L, &out[type_at], static_cast<uInt>(4 + data.size()))));
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  return format == ImageFormat::Ppm ? decode_ppm(bytes) : decode_png(bytes);
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels.size());
  for (double p : img.pixels) out.push_back(to_byte(p));
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> out(kPngSignature.begin(), kPngSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  put_chunk(out, "IHDR", ihdr);

  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    for (std::size_t i = 0; i < stride; ++i) raw.push_back(to_byte(img.pixels[y * stride + i]));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("PNG compression failed");
  z.resize(zlen);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

namespace {
ImageFormat format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ppm") return ImageFormat::Ppm;
  if (ext == ".png") return ImageFormat::Png;
  throw DataError("unsupported image extension '" + ext + "' for '" + path.string() + "'");
}
}  // namespace

Image read_image_file(const std::filesystem::path& path) {
  const auto format = format_for(path);
  const auto bytes = read_file_bytes(path);
  try {
    return decode_image(bytes, format);
  } catch (const DecodeError& e) {
    throw DecodeError(e.offset(), e.reason() + " in '" + path.string() + "'");
  }
}

void write_image_file(const std::filesystem::path& path, const Image& img) {
  const auto bytes = format_for(path) == ImageFormat::Ppm ? encode_ppm(img) : encode_png(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

}  // namespace dermaug
