// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "cellseg/raster.hpp"

namespace cellseg {

/// Parameters of one Gabor kernel: Gaussian envelope (sigma, aspect gamma)
/// modulating a cosine carrier (wavelength lambda, orientation theta, phase psi).
struct GaborParams {
  double lambda = 4.0;   // carrier wavelength, pixels
  double theta = 0.0;    // orientation, radians in [0, pi)
  double psi = 0.0;      // carrier phase, radians
  double sigma = 5.0;    // envelope std-dev, pixels
  double gamma = 0.5;    // envelope aspect ratio

  void validate() const;
};

struct GaborBank {
  std::vector<std::pair<GaborParams, std::vector<double>>> kernels;
  int kernel_side = 0;

  void validate() const;
};

/// Default kernel side 2*ceil(3*sigma)+1 for sigma=5.
inline constexpr int kDefaultGaborSide = 31;

/// Evaluates exp(-(x'^2 + gamma^2 y'^2)/(2 sigma^2)) * cos(2 pi x'/lambda + psi)
/// on a side x side grid centered at 0, x' = x cos(theta) + y sin(theta),
/// y' = -x sin(theta) + y cos(theta). Row r, column c maps to y = r - (side-1)/2,
/// x = c - (side-1)/2.
std::vector<double> gabor_kernel(const GaborParams& params, int side);

/// 24 kernels: wavelengths {4, 10, 20} ascending, and for each, 8 orientations
/// 0, 22.5, ..., 157.5 degrees ascending, with sigma 5, gamma 0.5, psi 0.
GaborBank build_bank(int side = kDefaultGaborSide);

/// Cross-correlation with reflect border padding (mirror including the edge
/// pixel: index -1 maps to 0, index H maps to H-1). Fixed summation order per
/// output pixel; any internal parallelism is over disjoint output rows.
std::vector<double> conv2d_reflect(const std::vector<double>& src, int height, int width,
                                   const std::vector<double>& kernel, int side);

/// Luminance 0.299 R + 0.587 G + 0.114 B.
std::vector<double> luminance(const MultiChannelImage& image);

/// Max of absolute filter responses on the luminance channel, min-max
/// normalized per image to [0,1]. Constant images map to all zeros.
GrayImage edge_map(const MultiChannelImage& image, const GaborBank& bank);

/// [R, G, B, edge]; the first three channels are bit-identical to the input.
MultiChannelImage assemble_4ch(const MultiChannelImage& image, const GrayImage& edge);

}  // namespace cellseg
