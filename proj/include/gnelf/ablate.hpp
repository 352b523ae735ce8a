// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <vector>

#include "gnelf/dataio.hpp"
#include "gnelf/image.hpp"
#include "gnelf/model.hpp"

namespace gnelf {

struct AblationRow {
  int k = 0;
  double psnr = 0.0;        // mean over views, against ground truth
  double similarity = 0.0;  // mean cosine similarity to the unmasked renders
};

/// Renders every frame (or the first `max_views`) with the top-k levels
/// masked for each k in `ks`.
std::vector<AblationRow> ablate_masking(const Model& model, const dataio::SceneDataset& data,
                                        const std::vector<int>& ks, int scale = 1,
                                        const RenderOptions& options = {}, int max_views = 0);

/// Pixels whose largest channel deviation from `background` exceeds
/// `threshold`. The default is half the smallest channel contrast the toy
/// scene generator guarantees between a primitive and a black background.
std::vector<bool> foreground_mask(const Image& img, Color background, float threshold = 0.05f);
/// Intersection over union of two masks; 1 when both are empty.
double mask_iou(const std::vector<bool>& a, const std::vector<bool>& b);

}  // namespace gnelf
