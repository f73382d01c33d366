#include "danet/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace danet::imaging {

namespace {

void check_raw(const RawImage& img) {
  if (img.width < 1 || img.height < 1) {
    throw std::invalid_argument("canonicalize: degenerate image " +
                                std::to_string(img.width) + "x" +
                                std::to_string(img.height));
  }
  if (img.pixels.size() !=
      static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height)) {
    throw std::invalid_argument("canonicalize: pixel buffer size does not match dimensions");
  }
}

// Bilinear sample with pixel-center alignment, clamped at the borders.
double sample_bilinear(const RawImage& img, double src_r, double src_c) {
  src_r = std::clamp(src_r, 0.0, static_cast<double>(img.height - 1));
  src_c = std::clamp(src_c, 0.0, static_cast<double>(img.width - 1));
  const int r0 = static_cast<int>(src_r);
  const int c0 = static_cast<int>(src_c);
  const int r1 = std::min(r0 + 1, img.height - 1);
  const int c1 = std::min(c0 + 1, img.width - 1);
  const double fr = src_r - r0;
  const double fc = src_c - c0;
  const double top = img.at(r0, c0) * (1.0 - fc) + img.at(r0, c1) * fc;
  const double bot = img.at(r1, c0) * (1.0 - fc) + img.at(r1, c1) * fc;
  return static_cast<double>(top * (1.0 - fr) + bot * fr);
}

}  // namespace

CanonicalizeMeta canonicalize_geometry(int width, int height, int side) {
  if (width < 2 || height < 1) {
    throw std::invalid_argument("canonicalize_geometry: degenerate size " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
  if (side < 2) throw std::invalid_argument("canonicalize_geometry: side must be >= 2");

  CanonicalizeMeta meta;
  meta.original_width = width;
  meta.original_height = height;
  meta.scale = static_cast<double>(side) / width;
  // round-half-up(height * side / width), exact in integers:
  // floor((2*H*side + W) / (2*W)).
  const long long num = 2LL * height * side + width;
  const long long den = 2LL * width;
  meta.scaled_height = static_cast<int>(num / den);
  if (meta.scaled_height < side) {
    const int pad = side - meta.scaled_height;
    meta.pad_top = pad / 2;
    meta.pad_bottom = pad - meta.pad_top;  // odd extra row at the bottom
  } else if (meta.scaled_height > side) {
    const int crop = meta.scaled_height - side;
    meta.crop_top = crop / 2;
    meta.crop_bottom = crop - meta.crop_top;  // odd extra row off the bottom
  }
  return meta;
}

CanonicalImage canonicalize(const RawImage& img, int side, int channels,
                            CanonicalizeMeta& meta_out) {
  check_raw(img);
  if (channels < 1) throw std::invalid_argument("canonicalize: channels must be >= 1");
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("canonicalize: intensity outside [0,1]");
    }
  }
  meta_out = canonicalize_geometry(img.width, img.height, side);
  const int scaled_h = meta_out.scaled_height;

  // Resize to side x scaled_h.
  std::vector<double> resized(static_cast<std::size_t>(scaled_h) * side, 0.0);
  const double col_scale = static_cast<double>(img.width) / side;
  const double row_scale = static_cast<double>(img.height) / scaled_h;
  for (int r = 0; r < scaled_h; ++r) {
    const double src_r = (r + 0.5) * row_scale - 0.5;
    for (int c = 0; c < side; ++c) {
      const double src_c = (c + 0.5) * col_scale - 0.5;
      resized[static_cast<std::size_t>(r) * side + c] = sample_bilinear(img, src_r, src_c);
    }
  }

  CanonicalImage out;
  out.side = side;
  out.channels = channels;
  out.pixels.assign(static_cast<std::size_t>(side) * side * channels, 0.0);
  for (int r = 0; r < side; ++r) {
    const int src_r = r - meta_out.pad_top + meta_out.crop_top;
    if (src_r < 0 || src_r >= scaled_h) continue;  // zero padding rows
    for (int c = 0; c < side; ++c) {
      const double v = resized[static_cast<std::size_t>(src_r) * side + c];
      for (int k = 0; k < channels; ++k) out.at(r, c, k) = v;
    }
  }
  return out;
}

CanonicalImage canonicalize(const RawImage& img, int side, int channels) {
  CanonicalizeMeta meta;
  return canonicalize(img, side, channels, meta);
}

CanonicalImage augment(const CanonicalImage& img, const AugmentConfig& cfg, Rng& rng) {
  if (cfg.flip_probability < 0.0 || cfg.flip_probability > 1.0 ||
      cfg.scale_low <= 0.0 || cfg.scale_low > cfg.scale_high) {
    throw std::invalid_argument("augment: invalid AugmentConfig");
  }
  const bool flip = rng.uniform() < cfg.flip_probability;
  const double s = rng.uniform(cfg.scale_low, cfg.scale_high);

  const int side = img.side;
  CanonicalImage out;
  out.side = side;
  out.channels = img.channels;
  out.pixels.assign(img.pixels.size(), 0.0);

  const double center = (side - 1) / 2.0;
  for (int r = 0; r < side; ++r) {
    const double src_r = center + (r - center) / s;
    for (int c = 0; c < side; ++c) {
      double src_c = center + (c - center) / s;
      if (flip) src_c = (side - 1) - src_c;
      if (src_r < 0.0 || src_r > side - 1 || src_c < 0.0 || src_c > side - 1) {
        continue;  // zero outside the source frame (zoom-out padding)
      }
      const int r0 = static_cast<int>(src_r);
      const int c0 = static_cast<int>(src_c);
      const int r1 = std::min(r0 + 1, side - 1);
      const int c1 = std::min(c0 + 1, side - 1);
      const double fr = src_r - r0;
      const double fc = src_c - c0;
      for (int k = 0; k < img.channels; ++k) {
        const double top = img.at(r0, c0, k) * (1.0 - fc) + img.at(r0, c1, k) * fc;
        const double bot = img.at(r1, c0, k) * (1.0 - fc) + img.at(r1, c1, k) * fc;
        out.at(r, c, k) = static_cast<double>(top * (1.0 - fr) + bot * fr);
      }
    }
  }
  return out;
}

Tensor to_tensor(const CanonicalImage& img) {
  Tensor t({img.channels, img.side, img.side});
  std::size_t i = 0;
  for (int k = 0; k < img.channels; ++k) {
    for (int r = 0; r < img.side; ++r) {
      for (int c = 0; c < img.side; ++c) {
        t.data[i++] = img.at(r, c, k);
      }
    }
  }
  return t;
}

}  // namespace danet::imaging
