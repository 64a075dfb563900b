// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cellseg/raster.hpp"

namespace cellseg {

// PNG: masks and single channels as 8-bit grayscale (mask 0 -> 0, 1 -> 255),
// images as 8-bit RGB. Values quantize as round(v*255) and read back as v/255.

void write_mask_png(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::string& path);

/// Writes a 1-channel raster as gray8 or a 3-channel raster as RGB8.
void write_image_png(const std::string& path, const MultiChannelImage& image);
MultiChannelImage read_image_png(const std::string& path);

// CSK1: float raster container for channel counts PNG cannot hold.
// Layout: magic "CSK1", u32 LE height, width, channels, then H*W*C float32
// LE values, row-major channel-last.

void write_raster_csk1(const std::string& path, const MultiChannelImage& image);
MultiChannelImage read_raster_csk1(const std::string& path);

/// Reads a .png (grayscale or RGB) or .csk1 raster by extension.
MultiChannelImage read_raster_any(const std::string& path);

}  // namespace cellseg
