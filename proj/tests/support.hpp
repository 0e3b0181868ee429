#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "dermaug/image.hpp"
#include "dermaug/rng.hpp"

namespace testing {

inline dermaug::Image random_image(int h, int w, std::uint64_t seed) {
  dermaug::Image img(h, w);
  dermaug::RngStream rng(seed, 0xACE);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

// 8-bit quantized, so codecs reproduce it exactly.
inline dermaug::Image random_image_8bit(int h, int w, std::uint64_t seed) {
  dermaug::Image img(h, w);
  dermaug::RngStream rng(seed, 0xB17);
  for (double& p : img.pixels) p = static_cast<double>(rng.below(256)) / 255.0;
  return img;
}

inline dermaug::Image constant_image(int h, int w, double v) { return dermaug::Image(h, w, v); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dermaug_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
