#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dermaug/augment.hpp"

namespace dermaug {
namespace {

struct Point {
  double x, y;
};

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

std::vector<Point> flatten(const HairStroke& s) {
  // A straight chord needs a single segment; bent strokes are sampled every ~2 px.
  const double chord = std::hypot(s.x2 - s.x0, s.y2 - s.y0);
  const double mx = 0.5 * (s.x0 + s.x2), my = 0.5 * (s.y0 + s.y2);
  const bool straight = s.cx == mx && s.cy == my;
  const int segments = straight ? 1 : std::max(8, static_cast<int>(std::ceil(chord / 2.0)));
  std::vector<Point> pts;
  pts.reserve(segments + 1);
  for (int i = 0; i <= segments; ++i) {
    const double t = static_cast<double>(i) / segments, u = 1.0 - t;
    pts.push_back({u * u * s.x0 + 2 * u * t * s.cx + t * t * s.x2, u * u * s.y0 + 2 * u * t * s.cy + t * t * s.y2});
  }
  return pts;
}

}  // namespace

std::vector<HairStroke> sample_hair_strokes(int height, int width, RngStream& rng, const AugConfig& cfg) {
  std::vector<HairStroke> strokes;
  if (!rng.bernoulli(cfg.hair_prob)) return strokes;
  const auto count = rng.uniform_int(cfg.hair_count_range.first, cfg.hair_count_range.second);
  const double diagonal = std::hypot(static_cast<double>(height), static_cast<double>(width));
  strokes.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const double mx = rng.uniform(-0.5, width - 0.5);
    const double my = rng.uniform(-0.5, height - 0.5);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double length = rng.uniform(cfg.hair_length_range.first, cfg.hair_length_range.second) * diagonal;
    const double bend = rng.uniform(-1.0, 1.0) * cfg.hair_curvature_max * length;
    const double thickness = rng.uniform(cfg.hair_thickness_range.first, cfg.hair_thickness_range.second);
    const double darkness = rng.uniform(cfg.hair_darkness_range.first, cfg.hair_darkness_range.second);
    const double tint = rng.uniform();

    const double ux = std::cos(theta), uy = std::sin(theta);
    const double half = 0.5 * length;
    HairStroke s;
    s.x0 = mx - half * ux;
    s.y0 = my - half * uy;
    s.x2 = mx + half * ux;
    s.y2 = my + half * uy;
    s.cx = mx - bend * uy;
    s.cy = my + bend * ux;
    s.thickness = thickness;
    const double shade = 1.0 - darkness;
    s.colour = {shade, shade * (0.70 + 0.15 * tint), shade * (0.45 + 0.25 * tint)};
    strokes.push_back(s);
  }
  return strokes;
}

Image render_hair(const Image& image, const std::vector<HairStroke>& strokes) {
  Image out = image;
  for (const auto& s : strokes) {
    const auto pts = flatten(s);
    const double reach = 0.5 * s.thickness + 0.5;
    double xlo = pts[0].x, xhi = pts[0].x, ylo = pts[0].y, yhi = pts[0].y;
    for (const auto& p : pts) {
      xlo = std::min(xlo, p.x), xhi = std::max(xhi, p.x);
      ylo = std::min(ylo, p.y), yhi = std::max(yhi, p.y);
    }
    const int x_begin = std::max(0, static_cast<int>(std::floor(xlo - reach)));
    const int x_end = std::min(out.width - 1, static_cast<int>(std::ceil(xhi + reach)));
    const int y_begin = std::max(0, static_cast<int>(std::floor(ylo - reach)));
    const int y_end = std::min(out.height - 1, static_cast<int>(std::ceil(yhi + reach)));
    for (int y = y_begin; y <= y_end; ++y)
      for (int x = x_begin; x <= x_end; ++x) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < pts.size(); ++i)
          d = std::min(d, segment_distance({double(x), double(y)}, pts[i - 1], pts[i]));
        const double alpha = std::clamp(reach - d, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        for (int c = 0; c < out.channels; ++c)
          out.at(y, x, c) = (1.0 - alpha) * out.at(y, x, c) + alpha * s.colour[c];
      }
  }
  return out;
}

Image hair_overlay(const Image& image, RngStream& rng, const AugConfig& cfg) {
  const auto strokes = sample_hair_strokes(image.height, image.width, rng, cfg);
  if (strokes.empty()) return image;
  return render_hair(image, strokes);
}

}  // namespace dermaug
