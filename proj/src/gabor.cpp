// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/gabor.hpp"

#include <algorithm>
#include <cmath>

namespace cellseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Mirror fold into [0, n): ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int reflect_index(int idx, int n) {
  if (n == 1) return 0;
  int period = 2 * n;
  int m = idx % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

/// Reflect-padded copy with margin h on every side.
std::vector<double> pad_reflect(const std::vector<double>& src, int height, int width, int h) {
  int ph = height + 2 * h;
  int pw = width + 2 * h;
  std::vector<double> out(static_cast<std::size_t>(ph) * pw);
  for (int y = 0; y < ph; ++y) {
    int sy = reflect_index(y - h, height);
    for (int x = 0; x < pw; ++x) {
      int sx = reflect_index(x - h, width);
      out[static_cast<std::size_t>(y) * pw + x] = src[static_cast<std::size_t>(sy) * width + sx];
    }
  }
  return out;
}

}  // namespace

void GaborParams::validate() const {
  require(lambda > 0.0, "gabor lambda must be positive");
  require(sigma > 0.0, "gabor sigma must be positive");
  require(gamma > 0.0, "gabor gamma must be positive");
  require(theta >= 0.0 && theta < kPi, "gabor theta must lie in [0, pi)");
}

void GaborBank::validate() const {
  require(kernels.size() == 24, "bank must hold exactly 24 kernels");
  require(kernel_side >= 3 && kernel_side % 2 == 1, "kernel side must be odd and >= 3");
  std::size_t expected = static_cast<std::size_t>(kernel_side) * kernel_side;
  for (const auto& [params, kernel] : kernels) {
    params.validate();
    require(kernel.size() == expected, "all kernels must share the bank side");
    require(all_finite(kernel), "kernel values must be finite");
  }
}

std::vector<double> gabor_kernel(const GaborParams& params, int side) {
  params.validate();
  require(side >= 3 && side % 2 == 1, "kernel side must be odd and >= 3, got " + std::to_string(side));
  int half = (side - 1) / 2;
  double cos_t = std::cos(params.theta);
  double sin_t = std::sin(params.theta);
  double inv_two_sigma_sq = 1.0 / (2.0 * params.sigma * params.sigma);
  double gamma_sq = params.gamma * params.gamma;
  double carrier = 2.0 * kPi / params.lambda;
  std::vector<double> kernel(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    double y = r - half;
    for (int c = 0; c < side; ++c) {
      double x = c - half;
      double xp = x * cos_t + y * sin_t;
      double yp = -x * sin_t + y * cos_t;
      kernel[static_cast<std::size_t>(r) * side + c] =
          std::exp(-(xp * xp + gamma_sq * yp * yp) * inv_two_sigma_sq) *
          std::cos(carrier * xp + params.psi);
    }
  }
  return kernel;
}

GaborBank build_bank(int side) {
  const double wavelengths[3] = {4.0, 10.0, 20.0};
  GaborBank bank;
  bank.kernel_side = side;
  bank.kernels.reserve(24);
  for (double lambda : wavelengths) {
    for (int j = 0; j < 8; ++j) {
      GaborParams p;
      p.lambda = lambda;
      p.theta = j * kPi / 8.0;
      p.psi = 0.0;
      p.sigma = 5.0;
      p.gamma = 0.5;
      bank.kernels.emplace_back(p, gabor_kernel(p, side));
    }
  }
  return bank;
}

std::vector<double> conv2d_reflect(const std::vector<double>& src, int height, int width,
                                   const std::vector<double>& kernel, int side) {
  require(height > 0 && width > 0, "image dimensions must be positive");
  require(src.size() == static_cast<std::size_t>(height) * width, "image size mismatch");
  require(side >= 1 && side % 2 == 1, "kernel side must be odd");
  require(kernel.size() == static_cast<std::size_t>(side) * side, "kernel size mismatch");
  int half = (side - 1) / 2;
  std::vector<double> padded = pad_reflect(src, height, width, half);
  int pw = width + 2 * half;
  std::vector<double> out(static_cast<std::size_t>(height) * width);
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        const double* krow = kernel.data();
        for (int ty = 0; ty < side; ++ty) {
          const double* prow = padded.data() + (y + ty) * pw + x;
          for (int tx = 0; tx < side; ++tx) acc += prow[tx] * krow[tx];
          krow += side;
        }
        out[y * width + x] = acc;
      }
    }
  });
  return out;
}

std::vector<double> luminance(const MultiChannelImage& image) {
  require(image.channels == 3, "luminance expects a 3-channel image, got " +
                                   std::to_string(image.channels) + " channels");
  std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  std::vector<double> lum(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* px = image.data.data() + i * 3;
    lum[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
  }
  return lum;
}

GrayImage edge_map(const MultiChannelImage& image, const GaborBank& bank) {
  bank.validate();
  require(image.channels == 3, "edge_map expects a 3-channel image, got " +
                                   std::to_string(image.channels) + " channels");
  int height = image.height;
  int width = image.width;
  int side = bank.kernel_side;
  int half = (side - 1) / 2;
  std::size_t n_filters = bank.kernels.size();
  std::size_t n_taps = static_cast<std::size_t>(side) * side;

  // Tap-major kernel matrix so every loaded pixel feeds all filters at once.
  std::vector<double> taps(n_taps * n_filters);
  for (std::size_t f = 0; f < n_filters; ++f)
    for (std::size_t t = 0; t < n_taps; ++t) taps[t * n_filters + f] = bank.kernels[f].second[t];

  std::vector<double> lum = luminance(image);
  std::vector<double> padded = pad_reflect(lum, height, width, half);
  int pw = width + 2 * half;

  GrayImage out(height, width, 1);
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t y0, std::size_t y1) {
    std::vector<double> acc(n_filters);
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < width; ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const double* tap = taps.data();
        for (int ty = 0; ty < side; ++ty) {
          const double* prow = padded.data() + (y + ty) * pw + x;
          for (int tx = 0; tx < side; ++tx) {
            double v = prow[tx];
            for (std::size_t f = 0; f < 24; ++f) acc[f] += v * tap[f];
            tap += n_filters;
          }
        }
        double best = 0.0;
        for (double a : acc) best = std::max(best, std::abs(a));
        out.data[y * width + x] = best;
      }
    }
  });

  auto [lo_it, hi_it] = std::minmax_element(out.data.begin(), out.data.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi > lo) {
    double scale = 1.0 / (hi - lo);
    for (double& v : out.data) v = (v - lo) * scale;
  } else {
    std::fill(out.data.begin(), out.data.end(), 0.0);
  }
  return out;
}

MultiChannelImage assemble_4ch(const MultiChannelImage& image, const GrayImage& edge) {
  require(image.channels == 3, "assemble_4ch expects a 3-channel image");
  require(edge.channels == 1, "edge raster must have a single channel");
  require(image.height == edge.height && image.width == edge.width,
          "image/edge shape mismatch: image " + std::to_string(image.height) + "x" +
              std::to_string(image.width) + ", edge " + std::to_string(edge.height) + "x" +
              std::to_string(edge.width));
  MultiChannelImage out(image.height, image.width, 4);
  std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i * 4 + 0] = image.data[i * 3 + 0];
    out.data[i * 4 + 1] = image.data[i * 3 + 1];
    out.data[i * 4 + 2] = image.data[i * 3 + 2];
    out.data[i * 4 + 3] = edge.data[i];
  }
  return out;
}

}  // namespace cellseg
