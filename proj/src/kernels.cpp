#include "dermaug/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef DERMAUG_HAVE_OPENMP
#include <omp.h>
#endif

namespace dermaug::kernels {
namespace {

// Copies `planes` H x W planes into zero-bordered (H+2) x (W+2) planes so the
// 3x3 loops below need no bounds checks.
std::vector<double> pad_planes(int planes, int H, int W, const double* src) {
  const std::ptrdiff_t pw = W + 2, pp = std::ptrdiff_t(H + 2) * pw;
  std::vector<double> out(std::size_t(planes) * pp, 0.0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < H; ++y)
      std::copy_n(src + (std::ptrdiff_t(p) * H + y) * W, W, out.data() + p * pp + (y + 1) * pw + 1);
  return out;
}

}  // namespace

int max_threads() {
#ifdef DERMAUG_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv3x3_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> bias, std::span<double> output) {
  const int H = s.height, W = s.width, Ci = s.in_channels, Co = s.out_channels;
  const std::ptrdiff_t plane = std::ptrdiff_t(H) * W, pw = W + 2, pp = std::ptrdiff_t(H + 2) * pw;
  const auto padded = pad_planes(s.batch * Ci, H, W, input.data());
  const double* in = padded.data();
  const double* wt = weight.data();
  double* out = output.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int co = 0; co < Co; ++co) {
      double* o = out + (std::ptrdiff_t(n) * Co + co) * plane;
      std::fill(o, o + plane, bias[co]);
      for (int ci = 0; ci < Ci; ++ci) {
        const double* x = in + (std::ptrdiff_t(n) * Ci + ci) * pp;
        const double* k = wt + (std::ptrdiff_t(co) * Ci + ci) * 9;
        for (int y = 0; y < H; ++y) {
          double* orow = o + std::ptrdiff_t(y) * W;
          const double* r0 = x + std::ptrdiff_t(y) * pw;
          const double* r1 = r0 + pw;
          const double* r2 = r1 + pw;
          for (int xx = 0; xx < W; ++xx)
            orow[xx] += k[0] * r0[xx] + k[1] * r0[xx + 1] + k[2] * r0[xx + 2] + k[3] * r1[xx] + k[4] * r1[xx + 1] +
                        k[5] * r1[xx + 2] + k[6] * r2[xx] + k[7] * r2[xx + 1] + k[8] * r2[xx + 2];
        }
      }
    }
  }
}

void conv3x3_backward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                      std::span<const double> doutput, std::span<double> dinput, std::span<double> dweight,
                      std::span<double> dbias) {
  const int H = s.height, W = s.width, Ci = s.in_channels, Co = s.out_channels, N = s.batch;
  const std::ptrdiff_t plane = std::ptrdiff_t(H) * W, pw = W + 2, pp = std::ptrdiff_t(H + 2) * pw;
  const double* wt = weight.data();
  const double* dout = doutput.data();

#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co) {
    double acc = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* g = dout + (std::ptrdiff_t(n) * Co + co) * plane;
      for (std::ptrdiff_t i = 0; i < plane; ++i) acc += g[i];
    }
    dbias[co] = acc;
  }

  {
    const auto padded = pad_planes(N * Ci, H, W, input.data());
    const double* in = padded.data();
    double* dw = dweight.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < Co; ++co) {
      for (int ci = 0; ci < Ci; ++ci) {
        double a[9] = {};
        for (int n = 0; n < N; ++n) {
          const double* g = dout + (std::ptrdiff_t(n) * Co + co) * plane;
          const double* x = in + (std::ptrdiff_t(n) * Ci + ci) * pp;
          for (int y = 0; y < H; ++y) {
            const double* grow = g + std::ptrdiff_t(y) * W;
            const double* r0 = x + std::ptrdiff_t(y) * pw;
            const double* r1 = r0 + pw;
            const double* r2 = r1 + pw;
            for (int xx = 0; xx < W; ++xx) {
              const double gv = grow[xx];
              a[0] += gv * r0[xx];
              a[1] += gv * r0[xx + 1];
              a[2] += gv * r0[xx + 2];
              a[3] += gv * r1[xx];
              a[4] += gv * r1[xx + 1];
              a[5] += gv * r1[xx + 2];
              a[6] += gv * r2[xx];
              a[7] += gv * r2[xx + 1];
              a[8] += gv * r2[xx + 2];
            }
          }
        }
        std::copy_n(a, 9, dw + (std::ptrdiff_t(co) * Ci + ci) * 9);
      }
    }
  }

  if (dinput.empty()) return;
  // Full correlation with the flipped kernel over the zero-bordered gradient.
  const auto gpad = pad_planes(N * Co, H, W, dout);
  double* din = dinput.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int ci = 0; ci < Ci; ++ci) {
      double* d = din + (std::ptrdiff_t(n) * Ci + ci) * plane;
      std::fill(d, d + plane, 0.0);
      for (int co = 0; co < Co; ++co) {
        const double* g = gpad.data() + (std::ptrdiff_t(n) * Co + co) * pp;
        const double* k = wt + (std::ptrdiff_t(co) * Ci + ci) * 9;
        for (int y = 0; y < H; ++y) {
          double* drow = d + std::ptrdiff_t(y) * W;
          const double* r0 = g + std::ptrdiff_t(y) * pw;
          const double* r1 = r0 + pw;
          const double* r2 = r1 + pw;
          for (int xx = 0; xx < W; ++xx)
            drow[xx] += k[8] * r0[xx] + k[7] * r0[xx + 1] + k[6] * r0[xx + 2] + k[5] * r1[xx] + k[4] * r1[xx + 1] +
                        k[3] * r1[xx + 2] + k[2] * r2[xx] + k[1] * r2[xx + 1] + k[0] * r2[xx + 2];
        }
      }
    }
  }
}

void avgpool2x2_forward(int planes, int height, int width, std::span<const double> input,
                        std::span<double> output) {
  const int oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* x = input.data() + std::ptrdiff_t(p) * height * width;
    double* o = output.data() + std::ptrdiff_t(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double* r0 = x + std::ptrdiff_t(2 * y) * width;
      const double* r1 = r0 + width;
      for (int xx = 0; xx < ow; ++xx)
        o[y * ow + xx] = 0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
    }
  }
}

void avgpool2x2_backward(int planes, int height, int width, std::span<const double> doutput,
                         std::span<double> dinput) {
  const int oh = height / 2, ow = width / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* g = doutput.data() + std::ptrdiff_t(p) * oh * ow;
    double* d = dinput.data() + std::ptrdiff_t(p) * height * width;
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx) d[std::ptrdiff_t(y) * width + xx] = 0.25 * g[(y / 2) * ow + xx / 2];
  }
}

}  // namespace dermaug::kernels
