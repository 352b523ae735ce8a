// SPDX-License-Identifier: Apache-2.0
#include "gnelf/metrics.hpp"

#include <array>
#include <cmath>

#include "gnelf/error.hpp"

namespace gnelf {

namespace {

void check_shapes(const Image& img, const Image& ref) {
  if (!img.same_shape(ref) || img.pixels.size() != ref.pixels.size() || img.pixels.empty()) {
    throw InputDomainError("metric inputs must be non-empty images of equal shape");
  }
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable valid-region filtering of one channel.
std::vector<double> filter(const std::vector<double>& src, int w, int h) {
  static const auto g = gaussian_window();
  const int ow = w - kWindow + 1;
  const int oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double mse(const Image& img, const Image& ref) {
  check_shapes(img, ref);
  double sum = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double d = static_cast<double>(img.pixels[i]) - ref.pixels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(img.pixels.size());
}

double psnr(const Image& img, const Image& ref) {
  const double e = mse(img, ref);
  if (e <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(e));
}

double ssim(const Image& img, const Image& ref) {
  check_shapes(img, ref);
  if (img.width < kWindow || img.height < kWindow) {
    throw InputDomainError("ssim needs images of at least 11x11 pixels");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int w = img.width;
  const int h = img.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = img.pixels[3 * i + c];
      b[i] = ref.pixels[3 * i + c];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter(a, w, h);
    const auto mu_b = filter(b, w, h);
    const auto s_aa = filter(aa, w, h);
    const auto s_bb = filter(bb, w, h);
    const auto s_ab = filter(ab, w, h);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = s_aa[i] - mu_a[i] * mu_a[i];
      const double vb = s_bb[i] - mu_b[i] * mu_b[i];
      const double cov = s_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / 3.0;
}

EvalReport evaluate(const Model& model, const dataio::SceneDataset& data, int scale,
                    const RenderOptions& options, int max_views) {
  if (data.frames.empty()) throw InputDomainError("evaluation split has no frames");
  const int count = max_views > 0 ? std::min<int>(max_views, static_cast<int>(data.frames.size()))
                                  : static_cast<int>(data.frames.size());
  EvalReport report;
  for (int i = 0; i < count; ++i) {
    const auto& frame = data.frames[i];
    const Image pred = render_image(model, data.intrinsics, frame.pose, scale, options);
    const Image gt = downsample(frame.image, scale);
    ViewMetrics v{i, psnr(pred, gt), 0.0};
    v.ssim = (gt.width >= 11 && gt.height >= 11) ? ssim(pred, gt) : std::nan("");
    report.mean_psnr += v.psnr;
    report.mean_ssim += v.ssim;
    report.views.push_back(v);
  }
  report.mean_psnr /= count;
  report.mean_ssim /= count;
  return report;
}

}  // namespace gnelf
