// SPDX-License-Identifier: Apache-2.0
#include "gnelf/ablate.hpp"

#include <algorithm>
#include <cmath>

#include "gnelf/error.hpp"
#include "gnelf/gridenc.hpp"
#include "gnelf/metrics.hpp"

namespace gnelf {

std::vector<AblationRow> ablate_masking(const Model& model, const dataio::SceneDataset& data,
                                        const std::vector<int>& ks, int scale,
                                        const RenderOptions& options, int max_views) {
  const int levels = model.config.grid.levels;
  for (int k : ks) {
    if (k < 0 || k > levels) {
      throw InputDomainError("mask depth " + std::to_string(k) + " outside [0, " +
                             std::to_string(levels) + "]");
    }
  }
  if (data.frames.empty()) throw InputDomainError("ablation split has no frames");
  const int views = max_views > 0 ? std::min<int>(max_views, static_cast<int>(data.frames.size()))
                                  : static_cast<int>(data.frames.size());
  std::vector<Image> base, truth;
  RenderOptions opts = options;
  opts.mask = {};
  for (int i = 0; i < views; ++i) {
    base.push_back(render_image(model, data.intrinsics, data.frames[i].pose, scale, opts));
    truth.push_back(downsample(data.frames[i].image, scale));
  }
  std::vector<AblationRow> rows;
  for (int k : ks) {
    AblationRow row{k, 0.0, 0.0};
    opts.mask = {k};
    for (int i = 0; i < views; ++i) {
      const Image img = k == 0 ? base[i] : render_image(model, data.intrinsics, data.frames[i].pose, scale, opts);
      row.psnr += psnr(img, truth[i]);
      row.similarity += gridenc::grid_similarity(img.pixels, base[i].pixels);
    }
    row.psnr /= views;
    row.similarity /= views;
    rows.push_back(row);
  }
  return rows;
}

std::vector<bool> foreground_mask(const Image& img, Color background, float threshold) {
  std::vector<bool> mask(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    float d = 0.0f;
    for (int c = 0; c < 3; ++c) d = std::max(d, std::fabs(img.pixels[3 * i + c] - background[c]));
    mask[i] = d > threshold;
  }
  return mask;
}

double mask_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw InputDomainError("mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace gnelf
