#pragma once

#include <span>

namespace dermaug::kernels {

/// NCHW batch through a 3x3 convolution, stride 1, zero padding 1.
/// Weights are [out][in][3][3].
struct ConvShape {
  int batch;
  int in_channels;
  int out_channels;
  int height;
  int width;

  std::size_t input_size() const { return std::size_t(batch) * in_channels * height * width; }
  std::size_t output_size() const { return std::size_t(batch) * out_channels * height * width; }
  std::size_t weight_size() const { return std::size_t(out_channels) * in_channels * 9; }
};

// Parallel kernels. Each output element is produced by exactly one thread
// with a fixed accumulation order, so results do not depend on the thread count.

void conv3x3_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> bias, std::span<double> output);

/// Gradients are overwritten. An empty `dinput` skips the input gradient.
void conv3x3_backward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                      std::span<const double> doutput, std::span<double> dinput, std::span<double> dweight,
                      std::span<double> dbias);

/// `planes` independent H x W planes (H, W even) averaged over 2x2 windows.
void avgpool2x2_forward(int planes, int height, int width, std::span<const double> input,
                        std::span<double> output);
void avgpool2x2_backward(int planes, int height, int width, std::span<const double> doutput,
                         std::span<double> dinput);

/// Straightforward single-threaded versions kept as the test oracle and
/// benchmark baseline.
namespace reference {

void conv3x3_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> bias, std::span<double> output);
void conv3x3_backward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                      std::span<const double> doutput, std::span<double> dinput, std::span<double> dweight,
                      std::span<double> dbias);
void avgpool2x2_forward(int planes, int height, int width, std::span<const double> input,
                        std::span<double> output);
void avgpool2x2_backward(int planes, int height, int width, std::span<const double> doutput,
                         std::span<double> dinput);

}  // namespace reference

/// Threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace dermaug::kernels
