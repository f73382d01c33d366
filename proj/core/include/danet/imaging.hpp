#pragma once

#include <vector>

#include "danet/rng.hpp"
#include "danet/tensor.hpp"

namespace danet::imaging {

// Grayscale image as ingested, intensities already scaled to [0,1].
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major, width * height

  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

// Fixed-size square image, the unit of all model input. Stored interleaved
// (row, col, channel); channels are identical copies for grayscale sources.
struct CanonicalImage {
  int side = 0;
  int channels = 0;
  std::vector<double> pixels;  // side * side * channels

  double at(int r, int c, int k) const {
    return pixels[(static_cast<std::size_t>(r) * side + c) * channels + k];
  }
  double& at(int r, int c, int k) {
    return pixels[(static_cast<std::size_t>(r) * side + c) * channels + k];
  }
};

struct AugmentConfig {
  double flip_probability = 0.5;
  double scale_low = 0.8;
  double scale_high = 1.2;
};

// Geometry of a single canonicalization, recorded alongside prepared images.
struct CanonicalizeMeta {
  int original_width = 0;
  int original_height = 0;
  double scale = 0.0;     // side / original_width
  int scaled_height = 0;  // H' after width-referenced resize
  int pad_top = 0, pad_bottom = 0;
  int crop_top = 0, crop_bottom = 0;
};

// Width-referenced resize geometry: H' = round-half-up(H * side / W),
// pad split evenly with the odd row at the bottom, crop likewise removing
// the odd row from the bottom. Exposed separately so tests can check the
// integer geometry against exact rational arithmetic.
CanonicalizeMeta canonicalize_geometry(int width, int height, int side);

// Resamples by scale side/W with bilinear interpolation, then zero-pads or
// center-crops rows to a square. channels > 1 replicates the grayscale
// plane.
CanonicalImage canonicalize(const RawImage& img, int side, int channels = 3);
CanonicalImage canonicalize(const RawImage& img, int side, int channels,
                            CanonicalizeMeta& meta_out);

// Horizontal flip with probability cfg.flip_probability, then a uniform
// scale from [scale_low, scale_high] about the image center. Zooming out
// pads with zeros, zooming in crops; the output stays canonical.
CanonicalImage augment(const CanonicalImage& img, const AugmentConfig& cfg, Rng& rng);

// channels x side x side layout for the encoder.
Tensor to_tensor(const CanonicalImage& img);

}  // namespace danet::imaging
