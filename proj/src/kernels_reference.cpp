#include <cstddef>

#include "dermaug/kernels.hpp"

namespace dermaug::kernels::reference {
namespace {

struct Idx {
  int C, H, W;
  std::size_t operator()(int n, int c, int y, int x) const {
    return ((std::size_t(n) * C + c) * H + y) * W + x;
  }
};

inline bool inside(int y, int x, int h, int w) { return y >= 0 && y < h && x >= 0 && x < w; }

}  // namespace

void conv3x3_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> bias, std::span<double> output) {
  const Idx in{s.in_channels, s.height, s.width}, out{s.out_channels, s.height, s.width};
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          double acc = bias[co];
          for (int ci = 0; ci < s.in_channels; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - 1, sx = x + kx - 1;
                if (!inside(sy, sx, s.height, s.width)) continue;
                acc += weight[(std::size_t(co) * s.in_channels + ci) * 9 + ky * 3 + kx] * input[in(n, ci, sy, sx)];
              }
          output[out(n, co, y, x)] = acc;
        }
}

void conv3x3_backward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                      std::span<const double> doutput, std::span<double> dinput, std::span<double> dweight,
                      std::span<double> dbias) {
  const Idx in{s.in_channels, s.height, s.width}, out{s.out_channels, s.height, s.width};
  for (auto& v : dweight) v = 0.0;
  for (auto& v : dbias) v = 0.0;
  for (auto& v : dinput) v = 0.0;
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          const double g = doutput[out(n, co, y, x)];
          dbias[co] += g;
          for (int ci = 0; ci < s.in_channels; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - 1, sx = x + kx - 1;
                if (!inside(sy, sx, s.height, s.width)) continue;
                const std::size_t wi = (std::size_t(co) * s.in_channels + ci) * 9 + ky * 3 + kx;
                dweight[wi] += g * input[in(n, ci, sy, sx)];
                if (!dinput.empty()) dinput[in(n, ci, sy, sx)] += g * weight[wi];
              }
        }
}

void avgpool2x2_forward(int planes, int height, int width, std::span<const double> input,
                        std::span<double> output) {
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < height / 2; ++y)
      for (int x = 0; x < width / 2; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            acc += input[(std::size_t(p) * height + 2 * y + dy) * width + 2 * x + dx];
        output[(std::size_t(p) * (height / 2) + y) * (width / 2) + x] = acc / 4.0;
      }
}

void avgpool2x2_backward(int planes, int height, int width, std::span<const double> doutput,
                         std::span<double> dinput) {
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        dinput[(std::size_t(p) * height + y) * width + x] =
            doutput[(std::size_t(p) * (height / 2) + y / 2) * (width / 2) + x / 2] / 4.0;
}

}  // namespace dermaug::kernels::reference
