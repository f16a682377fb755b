#include "ber/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ber {
namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

float clamp_pixel(double v) { return static_cast<float>(std::clamp(v, 0.0, 255.0)); }

void sample_bilinear(const RasterImage& img, double fx, double fy, float* out) {
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double ax = fx - x0f;
  const double ay = fy - y0f;
  const int x0 = static_cast<int>(x0f);
  const int y0 = static_cast<int>(y0f);
  const int xa = reflect101(x0, img.width);
  const int xb = reflect101(x0 + 1, img.width);
  const int ya = reflect101(y0, img.height);
  const int yb = reflect101(y0 + 1, img.height);
  for (int c = 0; c < img.channels; ++c) {
    const double top = (1.0 - ax) * img.at(xa, ya, c) + ax * img.at(xb, ya, c);
    const double bottom = (1.0 - ax) * img.at(xa, yb, c) + ax * img.at(xb, yb, c);
    out[c] = static_cast<float>((1.0 - ay) * top + ay * bottom);
  }
}

template <typename MapFn> RasterImage warp(const RasterImage& img, MapFn&& map) {
  RasterImage out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto [sx, sy] = map(x, y);
      sample_bilinear(img, sx, sy, &out.data[out.index(x, y, 0)]);
    }
  }
  return out;
}

// Separable Gaussian blur with reflect-101 borders.
std::vector<double> gaussian_blur(const std::vector<double>& field, int w, int h, double sigma) {
  if (sigma <= 0.0) return field;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (auto& k : kernel) k /= norm;

  std::vector<double> tmp(field.size());
  std::vector<double> out(field.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               field[static_cast<std::size_t>(y * w + reflect101(x + i, w))];
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[static_cast<std::size_t>(reflect101(y + i, h) * w + x)];
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  return out;
}

// 2x3 affine taking each src point onto the matching dst point.
std::array<double, 6> solve_affine(const std::array<std::array<double, 2>, 3>& src,
                                   const std::array<std::array<double, 2>, 3>& dst) {
  const double a = src[0][0], b = src[0][1], c = src[1][0], d = src[1][1], e = src[2][0], f = src[2][1];
  const double det = a * (d - f) - b * (c - e) + (c * f - d * e);
  if (std::abs(det) < 1e-12) throw std::runtime_error("degenerate affine anchors");
  std::array<double, 6> m{};
  for (int row = 0; row < 2; ++row) {
    const double u0 = dst[0][static_cast<std::size_t>(row)], u1 = dst[1][static_cast<std::size_t>(row)],
                 u2 = dst[2][static_cast<std::size_t>(row)];
    // Cramer's rule on [x y 1] * [p q r]^T = u
    const double p = (u0 * (d - f) - b * (u1 - u2) + (u1 * f - d * u2)) / det;
    const double q = (a * (u1 - u2) - u0 * (c - e) + (c * u2 - u1 * e)) / det;
    const double r = (a * (d * u2 - u1 * f) - b * (c * u2 - u1 * e) + u0 * (c * f - d * e)) / det;
    m[static_cast<std::size_t>(3 * row)] = p;
    m[static_cast<std::size_t>(3 * row + 1)] = q;
    m[static_cast<std::size_t>(3 * row + 2)] = r;
  }
  return m;
}

// Maps output coordinate t in [0, n-1] through piecewise-linear cell scales.
std::vector<double> grid_axis_map(int n, const std::vector<double>& scales) {
  const auto steps = scales.size();
  std::vector<double> src_edges(steps + 1, 0.0);
  for (std::size_t i = 0; i < steps; ++i) src_edges[i + 1] = src_edges[i] + scales[i];
  const double total = src_edges.back();
  const double span = static_cast<double>(n - 1);
  for (auto& e : src_edges) e = e / total * span;
  std::vector<double> map(static_cast<std::size_t>(n));
  const double cell = span / static_cast<double>(steps);
  for (int t = 0; t < n; ++t) {
    if (n == 1) {
      map[0] = 0.0;
      break;
    }
    auto i = static_cast<std::size_t>(std::floor(t / cell));
    if (i >= steps) i = steps - 1;
    const double frac = (t - static_cast<double>(i) * cell) / cell;
    map[static_cast<std::size_t>(t)] = src_edges[i] + frac * (src_edges[i + 1] - src_edges[i]);
  }
  return map;
}

}  // namespace

RasterImage center_crop(const RasterImage& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0 || out_w > img.width || out_h > img.height)
    throw std::invalid_argument("center_crop: " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                                " window does not fit " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + " image");
  const int ox = (img.width - out_w) / 2;
  const int oy = (img.height - out_h) / 2;
  RasterImage out(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y) {
    const auto src = img.data.begin() + static_cast<std::ptrdiff_t>(img.index(ox, oy + y, 0));
    std::copy(src, src + out_w * img.channels, out.data.begin() + static_cast<std::ptrdiff_t>(out.index(0, y, 0)));
  }
  return out;
}

RasterImage horizontal_flip(const RasterImage& img) {
  RasterImage out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

RasterImage rotate90(const RasterImage& img, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  const bool swap = k % 2 == 1;
  RasterImage out(swap ? img.height : img.width, swap ? img.width : img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      int nx = x, ny = y;
      switch (k) {
        case 1: nx = y; ny = img.width - 1 - x; break;                     // counter-clockwise
        case 2: nx = img.width - 1 - x; ny = img.height - 1 - y; break;
        case 3: nx = img.height - 1 - y; ny = x; break;
      }
      for (int c = 0; c < img.channels; ++c) out.at(nx, ny, c) = img.at(x, y, c);
    }
  return out;
}

RasterImage adjust_contrast(const RasterImage& img, double alpha) {
  if (img.data.empty()) return img;
  const double mean = std::accumulate(img.data.begin(), img.data.end(), 0.0) / static_cast<double>(img.data.size());
  RasterImage out = img;
  for (auto& v : out.data) v = clamp_pixel(mean + (1.0 + alpha) * (v - mean));
  return out;
}

RasterImage adjust_brightness(const RasterImage& img, double beta) {
  RasterImage out = img;
  for (auto& v : out.data) v = clamp_pixel(v * (1.0 + beta));
  return out;
}

RasterImage adjust_gamma(const RasterImage& img, double gamma) {
  RasterImage out = img;
  for (auto& v : out.data) v = clamp_pixel(255.0 * std::pow(std::clamp(v / 255.0, 0.0, 1.0), gamma));
  return out;
}

RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0 || img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("resize_bilinear: empty image or target");
  RasterImage out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double ax = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
        const double bottom = (1.0 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
        out.at(x, y, c) = static_cast<float>((1.0 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

RasterImage normalize(const RasterImage& img, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
  if (img.channels != 3) throw std::invalid_argument("normalize: need 3 channels");
  RasterImage out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const auto c = i % 3;
    out.data[i] = static_cast<float>((img.data[i] / 255.0 - mean[c]) / std[c]);
  }
  return out;
}

RasterImage denormalize(const RasterImage& img, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
  if (img.channels != 3) throw std::invalid_argument("denormalize: need 3 channels");
  RasterImage out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const auto c = i % 3;
    out.data[i] = static_cast<float>((img.data[i] * std[c] + mean[c]) * 255.0);
  }
  return out;
}

double DisplacementField::max_magnitude() const {
  double best = 0.0;
  for (std::size_t i = 0; i < dx.size(); ++i) best = std::max(best, std::hypot(dx[i], dy[i]));
  return best;
}

RasterImage remap(const RasterImage& img, const DisplacementField& field) {
  if (field.width != img.width || field.height != img.height)
    throw std::invalid_argument("remap: field size differs from image");
  return warp(img, [&](int x, int y) {
    const auto i = static_cast<std::size_t>(y * img.width + x);
    return std::pair{x + field.dx[i], y + field.dy[i]};
  });
}

DisplacementField elastic_displacement(int width, int height, double alpha, double sigma, Rng& rng) {
  DisplacementField f{width, height, {}, {}};
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> nx(n), ny(n);
  for (auto& v : nx) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ny) v = rng.uniform(-1.0, 1.0);
  f.dx = gaussian_blur(nx, width, height, sigma);
  f.dy = gaussian_blur(ny, width, height, sigma);
  for (auto& v : f.dx) v *= alpha;
  for (auto& v : f.dy) v *= alpha;
  return f;
}

RasterImage elastic_transform(const RasterImage& img, const ElasticParams& p, Rng& rng) {
  const double cx = img.width / 2.0;
  const double cy = img.height / 2.0;
  const double sq = std::min(img.width, img.height) / 3.0;
  const std::array<std::array<double, 2>, 3> anchors = {{{cx + sq, cy + sq}, {cx + sq, cy - sq}, {cx - sq, cy - sq}}};
  auto moved = anchors;
  for (auto& pt : moved)
    for (auto& v : pt) v += rng.uniform(-p.alpha_affine, p.alpha_affine);
  // backward map: output anchor positions (moved) sample the original anchors
  const auto m = solve_affine(moved, anchors);
  const RasterImage affine = warp(img, [&](int x, int y) {
    return std::pair{m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  });
  const auto field = elastic_displacement(img.width, img.height, p.alpha, p.sigma, rng);
  return remap(affine, field);
}

RasterImage grid_distortion(const RasterImage& img, const std::vector<double>& x_scales,
                            const std::vector<double>& y_scales) {
  if (x_scales.empty() || y_scales.empty()) throw std::invalid_argument("grid_distortion: need >= 1 cell per axis");
  const auto mx = grid_axis_map(img.width, x_scales);
  const auto my = grid_axis_map(img.height, y_scales);
  return warp(img, [&](int x, int y) {
    return std::pair{mx[static_cast<std::size_t>(x)], my[static_cast<std::size_t>(y)]};
  });
}

RasterImage grid_distortion(const RasterImage& img, const GridParams& p, Rng& rng) {
  std::vector<double> xs(static_cast<std::size_t>(p.steps)), ys(static_cast<std::size_t>(p.steps));
  for (auto& v : xs) v = 1.0 + rng.uniform(-p.limit, p.limit);
  for (auto& v : ys) v = 1.0 + rng.uniform(-p.limit, p.limit);
  return grid_distortion(img, xs, ys);
}

RasterImage optical_distortion(const RasterImage& img, double k, double shift_x, double shift_y) {
  const double w = img.width;
  const double h = img.height;
  const double cx = (w - 1.0) / 2.0 + shift_x * w;
  const double cy = (h - 1.0) / 2.0 + shift_y * h;
  return warp(img, [&](int x, int y) {
    const double u = (x - cx) / w;
    const double v = (y - cy) / h;
    const double factor = 1.0 + k * (u * u + v * v);
    return std::pair{cx + u * factor * w, cy + v * factor * h};
  });
}

RasterImage optical_distortion(const RasterImage& img, const OpticalParams& p, Rng& rng) {
  const double k = rng.uniform(-p.distort_limit, p.distort_limit);
  const double sx = rng.uniform(-p.shift_limit, p.shift_limit);
  const double sy = rng.uniform(-p.shift_limit, p.shift_limit);
  return optical_distortion(img, k, sx, sy);
}

// ---------------------------------------------------------------------------

void AugmentPlan::validate() const {
  for (double p : step_probabilities())
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("augment: step probabilities must lie in [0, 1]");
  if (crop_w <= 0 || crop_h <= 0 || resize_w <= 0 || resize_h <= 0)
    throw std::invalid_argument("augment: crop and resize sizes must be positive");
  if (!(gamma_min > 0.0 && gamma_min <= gamma_max)) throw std::invalid_argument("augment: need 0 < gamma_min <= gamma_max");
  if (grid.steps < 1) throw std::invalid_argument("augment: grid steps must be >= 1");
  for (double s : std) if (!(s > 0.0)) throw std::invalid_argument("augment: std must be > 0");
}

RasterImage spatial_step(const RasterImage& img, Rng& rng, AugmentTrace* trace) {
  const auto choice = static_cast<int>(rng.below(2));
  if (trace) trace->spatial_choice = choice;
  if (choice == 0) return horizontal_flip(img);
  return rotate90(img, 1 + static_cast<int>(rng.below(3)));
}

RasterImage photometric_step(const RasterImage& img, const AugmentPlan& plan, Rng& rng, AugmentTrace* trace) {
  const auto choice = static_cast<int>(rng.below(3));
  if (trace) trace->photometric_choice = choice;
  switch (choice) {
    case 0: return adjust_contrast(img, rng.uniform(-plan.contrast_limit, plan.contrast_limit));
    case 1: return adjust_gamma(img, rng.uniform(plan.gamma_min, plan.gamma_max));
    default: return adjust_brightness(img, rng.uniform(-plan.brightness_limit, plan.brightness_limit));
  }
}

RasterImage distortion_step(const RasterImage& img, const AugmentPlan& plan, Rng& rng, AugmentTrace* trace) {
  const auto choice = static_cast<int>(rng.below(3));
  if (trace) trace->distortion_choice = choice;
  RasterImage out;
  switch (choice) {
    case 0: out = elastic_transform(img, plan.elastic, rng); break;
    case 1: out = grid_distortion(img, plan.grid, rng); break;
    default: out = optical_distortion(img, plan.optical, rng); break;
  }
  for (auto& v : out.data) v = clamp_pixel(v);
  return out;
}

RasterImage apply_plan(const RasterImage& img, const AugmentPlan& plan, Rng& rng, bool training,
                       AugmentTrace* trace) {
  AugmentTrace local;
  AugmentTrace& t = trace ? *trace : local;
  t = AugmentTrace{};
  RasterImage cur = center_crop(img, plan.crop_w, plan.crop_h);
  t.fired[0] = true;
  if (training) {
    if (rng.bernoulli(plan.p_spatial)) {
      cur = spatial_step(cur, rng, &t);
      t.fired[1] = true;
    }
    if (rng.bernoulli(plan.p_photometric)) {
      cur = photometric_step(cur, plan, rng, &t);
      t.fired[2] = true;
    }
    if (rng.bernoulli(plan.p_distortion)) {
      cur = distortion_step(cur, plan, rng, &t);
      t.fired[3] = true;
    }
  }
  cur = resize_bilinear(cur, plan.resize_w, plan.resize_h);
  t.fired[4] = true;
  cur = normalize(cur, plan.mean, plan.std);
  t.fired[5] = true;
  return cur;
}

// ---------------------------------------------------------------------------

std::vector<double> pool_features(const RasterImage& img, int grid) {
  if (grid < 1 || grid > img.width || grid > img.height) throw std::invalid_argument("pool_features: bad grid");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(grid * grid * img.channels));
  for (int gy = 0; gy < grid; ++gy) {
    const int y0 = gy * img.height / grid, y1 = (gy + 1) * img.height / grid;
    for (int gx = 0; gx < grid; ++gx) {
      const int x0 = gx * img.width / grid, x1 = (gx + 1) * img.width / grid;
      std::vector<double> acc(static_cast<std::size_t>(img.channels), 0.0);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < img.channels; ++c) acc[static_cast<std::size_t>(c)] += img.at(x, y, c);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      for (double a : acc) out.push_back(a / n);
    }
  }
  return out;
}

LabeledExample InputEncoder::encode(const LabeledExample& ex, Rng& rng, bool training) const {
  if (!ex.is_raster()) return ex;
  if (!ex.image) throw std::logic_error("InputEncoder: raster example not materialized");
  const RasterImage img = plan ? apply_plan(*ex.image, *plan, rng, training) : normalize(*ex.image);
  LabeledExample out;
  out.features = pool_features(img, pool_grid);
  out.label = ex.label;
  out.session = ex.session;
  out.task = ex.task;
  return out;
}

std::vector<LabeledExample> InputEncoder::encode_all(const std::vector<LabeledExample>& data, std::uint64_t seed,
                                                     bool training) const {
  std::vector<LabeledExample> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    out.push_back(encode(data[i], rng, training));
  }
  return out;
}

}  // namespace ber
