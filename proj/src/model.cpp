#include <algorithm>
#include <cmath>

#include "dermaug/error.hpp"
#include "dermaug/kernels.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {
namespace {

constexpr std::uint64_t kInitStream = 0x1417;

std::string stage_name(std::size_t i, const char* leaf) { return "stage" + std::to_string(i) + "." + leaf; }

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void glorot(Tensor& t, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
}

SeBlockParams se_params(const ParamSet& params, std::size_t stage, int reduction) {
  return {params.at(stage_name(stage, "se.reduce")), params.at(stage_name(stage, "se.expand")), reduction};
}

void check_batch(const Tensor& batch, const ModelSpec& spec) {
  const std::vector<std::size_t> want_tail = {std::size_t(spec.input_channels), std::size_t(spec.input_size),
                                              std::size_t(spec.input_size)};
  if (batch.rank() != 4 || batch.dim(0) == 0 ||
      !std::equal(want_tail.begin(), want_tail.end(), batch.shape.begin() + 1))
    throw ShapeError("input: batch " + shape_string(batch.shape) + " does not match model input [Nx" +
                     std::to_string(spec.input_channels) + "x" + std::to_string(spec.input_size) + "x" +
                     std::to_string(spec.input_size) + "]");
}

template <bool KeepCache>
Tensor run_forward(const ParamSet& params, const ModelSpec& spec, const Tensor& batch, ForwardCache* cache) {
  spec.validate();
  check_params(params, spec);
  check_batch(batch, spec);
  const int n = static_cast<int>(batch.dim(0));
  int size = spec.input_size;
  int in_ch = spec.input_channels;
  Tensor x = batch;
  for (std::size_t s = 0; s < spec.widths.size(); ++s) {
    const int out_ch = spec.widths[s];
    const kernels::ConvShape cs{n, in_ch, out_ch, size, size};
    Tensor conv({std::size_t(n), std::size_t(out_ch), std::size_t(size), std::size_t(size)});
    kernels::conv3x3_forward(cs, x.span(), params.at(stage_name(s, "conv.weight")).span(),
                             params.at(stage_name(s, "conv.bias")).span(), conv.span());
    Tensor relu = conv;
    for (double& v : relu.data) v = std::max(v, 0.0);
    SeCache se_cache;
    Tensor se = se_block_forward(relu, se_params(params, s, spec.se_reduction), KeepCache ? &se_cache : nullptr);
    Tensor pooled({std::size_t(n), std::size_t(out_ch), std::size_t(size / 2), std::size_t(size / 2)});
    kernels::avgpool2x2_forward(n * out_ch, size, size, se.span(), pooled.span());
    if constexpr (KeepCache)
      cache->stages.push_back({std::move(x), std::move(conv), std::move(relu), std::move(se_cache)});
    x = std::move(pooled);
    size /= 2;
    in_ch = out_ch;
  }

  const std::size_t plane = std::size_t(size) * size;
  Tensor gap({std::size_t(n), std::size_t(in_ch)});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < in_ch; ++c) {
      const double* p = &x.data[(std::size_t(i) * in_ch + c) * plane];
      double acc = 0.0;
      for (std::size_t k = 0; k < plane; ++k) acc += p[k];
      gap.data[std::size_t(i) * in_ch + c] = acc / static_cast<double>(plane);
    }

  const auto& w = params.at("head.fc.weight");
  const auto& b = params.at("head.fc.bias");
  const int k = spec.class_count;
  Tensor logits({std::size_t(n), std::size_t(k)});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      double acc = b.data[j];
      for (int c = 0; c < in_ch; ++c) acc += gap.data[std::size_t(i) * in_ch + c] * w.data[std::size_t(c) * k + j];
      logits.data[std::size_t(i) * k + j] = acc;
    }
  if constexpr (KeepCache) {
    cache->spec = spec;
    cache->params = params;
    cache->pooled = std::move(gap);
  }
  return logits;
}

}  // namespace

void ModelSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("model.widths", "need at least 2 conv stages");
  if (input_channels != kChannels) throw ConfigError("model.input_channels", "must be 3");
  if (class_count != kNumClasses) throw ConfigError("model.class_count", "must be 7");
  if (se_reduction < 1) throw ConfigError("model.se_reduction", "must be at least 1");
  for (int w : widths)
    if (w < 1 || w % se_reduction != 0)
      throw ConfigError("model.widths", "every width must be a positive multiple of se_reduction");
  const int div = 1 << widths.size();
  if (input_size < div || input_size % div != 0)
    throw ConfigError("model.input_size", "must be divisible by 2^stages = " + std::to_string(div));
}

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng(seed, kInitStream);
  ParamSet p;
  std::size_t in_ch = spec.input_channels;
  for (std::size_t s = 0; s < spec.widths.size(); ++s) {
    const std::size_t out_ch = spec.widths[s];
    const std::size_t hidden = out_ch / spec.se_reduction;
    glorot(p.add(stage_name(s, "conv.weight"), Tensor({out_ch, in_ch, 3, 3})), in_ch * 9, out_ch * 9, rng);
    p.add(stage_name(s, "conv.bias"), Tensor({out_ch}));
    glorot(p.add(stage_name(s, "se.reduce"), Tensor({out_ch, hidden})), out_ch, hidden, rng);
    glorot(p.add(stage_name(s, "se.expand"), Tensor({hidden, out_ch})), hidden, out_ch, rng);
    in_ch = out_ch;
  }
  const std::size_t k = spec.class_count;
  glorot(p.add("head.fc.weight", Tensor({in_ch, k})), in_ch, k, rng);
  p.add("head.fc.bias", Tensor({k}));
  return p;
}

void check_params(const ParamSet& params, const ModelSpec& spec) {
  auto expect = [&](const std::string& name, std::vector<std::size_t> shape) {
    if (!params.contains(name)) throw ShapeError(name + ": missing parameter");
    const auto& t = params.at(name);
    if (t.shape != shape)
      throw ShapeError(name + ": shape " + shape_string(t.shape) + ", expected " + shape_string(shape));
  };
  std::size_t in_ch = spec.input_channels;
  for (std::size_t s = 0; s < spec.widths.size(); ++s) {
    const std::size_t out_ch = spec.widths[s];
    const std::size_t hidden = out_ch / spec.se_reduction;
    expect(stage_name(s, "conv.weight"), {out_ch, in_ch, 3, 3});
    expect(stage_name(s, "conv.bias"), {out_ch});
    expect(stage_name(s, "se.reduce"), {out_ch, hidden});
    expect(stage_name(s, "se.expand"), {hidden, out_ch});
    in_ch = out_ch;
  }
  expect("head.fc.weight", {in_ch, std::size_t(spec.class_count)});
  expect("head.fc.bias", {std::size_t(spec.class_count)});
  if (params.size() != 4 * spec.widths.size() + 2) throw ShapeError("parameter set has unexpected extra tensors");
}

Tensor images_to_batch(std::span<const Image* const> images) {
  if (images.empty()) throw ShapeError("empty image batch");
  const Image& first = *images.front();
  const std::size_t h = first.height, w = first.width, c = first.channels;
  Tensor t({images.size(), c, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (!img.same_shape(first)) throw ShapeError("images in a batch must share one shape");
    double* dst = &t.data[n * c * h * w];
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) dst[(ch * h + y) * w + x] = img.pixels[(y * w + x) * c + ch];
  }
  return t;
}

Tensor images_to_batch(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return images_to_batch(std::span<const Image* const>(ptrs));
}

Tensor se_block_forward(const Tensor& features, const SeBlockParams& p, SeCache* cache) {
  if (features.rank() != 4) throw ShapeError("se: features must be N x C x H x W");
  const std::size_t n = features.dim(0), c = features.dim(1), plane = features.dim(2) * features.dim(3);
  if (p.reduction < 1 || c % p.reduction != 0) throw ShapeError("se: reduction must divide channel count");
  const std::size_t r = c / p.reduction;
  if (p.reduce.shape != std::vector<std::size_t>{c, r} || p.expand.shape != std::vector<std::size_t>{r, c})
    throw ShapeError("se: weights " + shape_string(p.reduce.shape) + "/" + shape_string(p.expand.shape) +
                     " do not match " + std::to_string(c) + " channels at reduction " + std::to_string(p.reduction));

  Tensor z({n, c}), h({n, r}), s({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* f = &features.data[(i * c + ch) * plane];
      double acc = 0.0;
      for (std::size_t k = 0; k < plane; ++k) acc += f[k];
      z.data[i * c + ch] = acc / static_cast<double>(plane);
    }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) acc += z.data[i * c + ch] * p.reduce.data[ch * r + j];
      h.data[i * r + j] = acc;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t j = 0; j < r; ++j) acc += std::max(h.data[i * r + j], 0.0) * p.expand.data[j * c + ch];
      s.data[i * c + ch] = sigmoid(acc);
    }
  }
  Tensor out = features;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = s.data[i * c + ch];
      double* o = &out.data[(i * c + ch) * plane];
      for (std::size_t k = 0; k < plane; ++k) o[k] *= g;
    }
  if (cache) *cache = {std::move(z), std::move(h), std::move(s)};
  return out;
}

SeGrads se_block_backward(const Tensor& features, const SeBlockParams& p, const SeCache& cache,
                          const Tensor& doutput) {
  if (doutput.shape != features.shape) throw ShapeError("se backward: gradient shape mismatch");
  const std::size_t n = features.dim(0), c = features.dim(1), plane = features.dim(2) * features.dim(3);
  const std::size_t r = c / p.reduction;
  SeGrads g{Tensor(features.shape), Tensor(p.reduce.shape), Tensor(p.expand.shape)};
  std::vector<double> da(c), dh(r);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* f = &features.data[(i * c + ch) * plane];
      const double* d = &doutput.data[(i * c + ch) * plane];
      double ds = 0.0;
      for (std::size_t k = 0; k < plane; ++k) ds += d[k] * f[k];
      const double s = cache.gate.data[i * c + ch];
      da[ch] = ds * s * (1.0 - s);
    }
    for (std::size_t j = 0; j < r; ++j) {
      const double hpre = cache.hidden_pre.data[i * r + j];
      const double hact = std::max(hpre, 0.0);
      double acc = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        g.dexpand.data[j * c + ch] += hact * da[ch];
        acc += da[ch] * p.expand.data[j * c + ch];
      }
      dh[j] = hpre > 0.0 ? acc : 0.0;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double dz = 0.0;
      for (std::size_t j = 0; j < r; ++j) {
        g.dreduce.data[ch * r + j] += cache.squeezed.data[i * c + ch] * dh[j];
        dz += dh[j] * p.reduce.data[ch * r + j];
      }
      const double s = cache.gate.data[i * c + ch];
      const double spread = dz / static_cast<double>(plane);
      const double* d = &doutput.data[(i * c + ch) * plane];
      double* out = &g.dfeatures.data[(i * c + ch) * plane];
      for (std::size_t k = 0; k < plane; ++k) out[k] = s * d[k] + spread;
    }
  }
  return g;
}

ForwardResult forward(const ParamSet& params, const ModelSpec& spec, const Tensor& batch) {
  ForwardResult r;
  r.logits = run_forward<true>(params, spec, batch, &r.cache);
  return r;
}

Tensor forward_logits(const ParamSet& params, const ModelSpec& spec, const Tensor& batch) {
  return run_forward<false>(params, spec, batch, nullptr);
}

ParamSet backward(ForwardCache& cache, const Tensor& dlogits) {
  if (cache.consumed) throw InvariantError("backward: stale forward cache (already consumed)");
  if (cache.stages.empty()) throw InvariantError("backward: empty forward cache");
  const ModelSpec& spec = cache.spec;
  const std::size_t n = cache.pooled.dim(0), k = spec.class_count;
  if (dlogits.shape != std::vector<std::size_t>{n, k})
    throw ShapeError("backward: dlogits " + shape_string(dlogits.shape) + " does not match logits [" +
                     std::to_string(n) + "x" + std::to_string(k) + "]");
  cache.consumed = true;
  const ParamSet& params = cache.params;
  ParamSet grads = params.zeros_like();

  const std::size_t c_last = cache.pooled.dim(1);
  const auto& w = params.at("head.fc.weight");
  auto& dw = grads.at("head.fc.weight");
  auto& db = grads.at("head.fc.bias");
  Tensor dgap({n, c_last});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double g = dlogits.data[i * k + j];
      db.data[j] += g;
      for (std::size_t c = 0; c < c_last; ++c) {
        dw.data[c * k + j] += cache.pooled.data[i * c_last + c] * g;
        dgap.data[i * c_last + c] += g * w.data[c * k + j];
      }
    }

  int size = spec.input_size >> spec.widths.size();
  Tensor dx({n, c_last, std::size_t(size), std::size_t(size)});
  const std::size_t last_plane = std::size_t(size) * size;
  for (std::size_t i = 0; i < n * c_last; ++i)
    for (std::size_t q = 0; q < last_plane; ++q)
      dx.data[i * last_plane + q] = dgap.data[i] / static_cast<double>(last_plane);

  for (std::size_t s = spec.widths.size(); s-- > 0;) {
    StageCache& st = cache.stages[s];
    const int out_ch = spec.widths[s];
    const int in_ch = static_cast<int>(st.input.dim(1));
    size *= 2;
    Tensor dse(st.relu_out.shape);
    kernels::avgpool2x2_backward(static_cast<int>(n) * out_ch, size, size, dx.span(), dse.span());
    SeGrads seg = se_block_backward(st.relu_out, se_params(params, s, spec.se_reduction), st.se, dse);
    grads.at(stage_name(s, "se.reduce")) = std::move(seg.dreduce);
    grads.at(stage_name(s, "se.expand")) = std::move(seg.dexpand);
    Tensor dconv = std::move(seg.dfeatures);
    for (std::size_t q = 0; q < dconv.size(); ++q)
      if (!(st.conv_out.data[q] > 0.0)) dconv.data[q] = 0.0;
    Tensor dinput;
    if (s > 0) dinput = Tensor(st.input.shape);
    const kernels::ConvShape cs{static_cast<int>(n), in_ch, out_ch, size, size};
    kernels::conv3x3_backward(cs, st.input.span(), params.at(stage_name(s, "conv.weight")).span(), dconv.span(),
                              dinput.span(), grads.at(stage_name(s, "conv.weight")).span(),
                              grads.at(stage_name(s, "conv.bias")).span());
    dx = std::move(dinput);
  }
  return grads;
}

}  // namespace dermaug
