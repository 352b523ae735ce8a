// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <vector>

#include "gnelf/dataio.hpp"
#include "gnelf/image.hpp"
#include "gnelf/model.hpp"

namespace gnelf {

inline constexpr double kPsnrCap = 99.0;

double mse(const Image& img, const Image& ref);
/// -10 log10(MSE), capped at 99 dB for identical images.
double psnr(const Image& img, const Image& ref);
/// Gaussian-window SSIM (11x11, sigma 1.5) averaged over the valid region
/// and the three channels.
double ssim(const Image& img, const Image& ref);

struct ViewMetrics {
  int index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Renders every frame at `scale` and compares with the box-downsampled
/// ground truth. `max_views` <= 0 evaluates all frames.
EvalReport evaluate(const Model& model, const dataio::SceneDataset& data, int scale = 1,
                    const RenderOptions& options = {}, int max_views = 0);

}  // namespace gnelf
