#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "ber/image.hpp"
#include "ber/rng.hpp"
#include "ber/stream.hpp"

namespace ber {

// ---------------------------------------------------------------------------
// Deterministic building blocks. Geometric warps sample by backward mapping
// with bilinear interpolation and reflect-101 borders.

RasterImage center_crop(const RasterImage& img, int out_w = 100, int out_h = 100);
RasterImage horizontal_flip(const RasterImage& img);
/// k counter-clockwise quarter turns.
RasterImage rotate90(const RasterImage& img, int k);

/// v' = mean + (1 + alpha)(v - mean), mean over all values of the image.
RasterImage adjust_contrast(const RasterImage& img, double alpha);
/// v' = v (1 + beta)
RasterImage adjust_brightness(const RasterImage& img, double beta);
/// v' = 255 (v / 255)^gamma
RasterImage adjust_gamma(const RasterImage& img, double gamma);

/// Half-pixel centers: src = (i + 0.5) * in / out - 0.5, clamped to the edge.
RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h);

constexpr std::array<double, 3> kImageNetMean = {0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImageNetStd = {0.229, 0.224, 0.225};

/// Per channel (v / 255 - mean_c) / std_c.
RasterImage normalize(const RasterImage& img, const std::array<double, 3>& mean = kImageNetMean,
                      const std::array<double, 3>& std = kImageNetStd);
RasterImage denormalize(const RasterImage& img, const std::array<double, 3>& mean = kImageNetMean,
                        const std::array<double, 3>& std = kImageNetStd);

/// Per-pixel displacement (x then y component) used by the warps below.
struct DisplacementField {
  int width = 0;
  int height = 0;
  std::vector<double> dx;
  std::vector<double> dy;

  double max_magnitude() const;
};

/// Bilinear sample of img at (x + dx, y + dy) for every output pixel.
RasterImage remap(const RasterImage& img, const DisplacementField& field);

/// alpha * GaussianBlur(U[-1, 1] noise, sigma), one field per axis.
DisplacementField elastic_displacement(int width, int height, double alpha, double sigma, Rng& rng);

struct ElasticParams {
  double alpha = 120.0;
  double sigma = 6.0;
  double alpha_affine = 3.6;
  bool operator==(const ElasticParams&) const = default;
};

/// Random affine jitter (three anchor points moved by up to alpha_affine
/// pixels) followed by the smoothed elastic displacement.
RasterImage elastic_transform(const RasterImage& img, const ElasticParams& p, Rng& rng);

struct GridParams {
  int steps = 5;
  double limit = 0.3;  // per-cell scale in [1 - limit, 1 + limit]
  bool operator==(const GridParams&) const = default;
};

/// Separable grid warp from per-cell scale factors (steps entries per axis).
/// Cumulative source positions are rescaled to span the full image.
RasterImage grid_distortion(const RasterImage& img, const std::vector<double>& x_scales,
                            const std::vector<double>& y_scales);
RasterImage grid_distortion(const RasterImage& img, const GridParams& p, Rng& rng);

struct OpticalParams {
  double distort_limit = 2.0;
  double shift_limit = 0.5;
  bool operator==(const OpticalParams&) const = default;
};

/// Radial warp: src = c + u (1 + k r^2) with u normalized by image size and the
/// center c shifted by (shift_x * width, shift_y * height).
RasterImage optical_distortion(const RasterImage& img, double k, double shift_x, double shift_y);
RasterImage optical_distortion(const RasterImage& img, const OpticalParams& p, Rng& rng);

// ---------------------------------------------------------------------------
// The six-step plan.

struct AugmentPlan {
  int crop_w = 100;
  int crop_h = 100;
  double p_spatial = 0.5;
  double p_photometric = 0.5;
  double p_distortion = 0.3;
  double contrast_limit = 0.4;
  double gamma_min = 0.2;
  double gamma_max = 1.8;
  double brightness_limit = 0.4;
  ElasticParams elastic;
  GridParams grid;
  OpticalParams optical;
  int resize_w = 224;
  int resize_h = 224;
  std::array<double, 3> mean = kImageNetMean;
  std::array<double, 3> std = kImageNetStd;

  /// Step probabilities in order; steps 1, 5 and 6 always fire.
  std::array<double, 6> step_probabilities() const {
    return {1.0, p_spatial, p_photometric, p_distortion, 1.0, 1.0};
  }
  void validate() const;
  bool operator==(const AugmentPlan&) const = default;
};

struct AugmentTrace {
  std::array<bool, 6> fired{};
  int spatial_choice = -1;      // 0 flip, 1 rotate90
  int photometric_choice = -1;  // 0 contrast, 1 gamma, 2 brightness
  int distortion_choice = -1;   // 0 elastic, 1 grid, 2 optical
};

RasterImage spatial_step(const RasterImage& img, Rng& rng, AugmentTrace* trace = nullptr);
RasterImage photometric_step(const RasterImage& img, const AugmentPlan& plan, Rng& rng,
                             AugmentTrace* trace = nullptr);
RasterImage distortion_step(const RasterImage& img, const AugmentPlan& plan, Rng& rng,
                            AugmentTrace* trace = nullptr);

/// Crop, then (training only) the stochastic steps 2-4, then resize and normalize.
RasterImage apply_plan(const RasterImage& img, const AugmentPlan& plan, Rng& rng, bool training,
                       AugmentTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Raster inputs to learner features.

/// Mean of each channel over a grid x grid partition; length grid * grid * channels.
std::vector<double> pool_features(const RasterImage& img, int grid);

/// Turns raster examples into feature examples. Without a plan the image is only
/// normalized before pooling; feature examples pass through unchanged.
struct InputEncoder {
  std::optional<AugmentPlan> plan;
  int pool_grid = 4;

  std::size_t feature_dim(int channels = 3) const {
    return static_cast<std::size_t>(pool_grid * pool_grid * channels);
  }
  LabeledExample encode(const LabeledExample& ex, Rng& rng, bool training) const;
  /// Each example draws from its own stream derived from (seed, position).
  std::vector<LabeledExample> encode_all(const std::vector<LabeledExample>& data, std::uint64_t seed,
                                         bool training) const;
};

}  // namespace ber
