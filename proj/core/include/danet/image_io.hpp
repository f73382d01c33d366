#pragma once

#include <string>

#include "danet/imaging.hpp"

namespace danet::imaging {

// Reads an 8-bit PNG or JPEG as grayscale, scaling intensities to [0,1].
RawImage read_image(const std::string& path);

// Writes the first channel of a canonical image as an 8-bit grayscale PNG.
void write_png(const CanonicalImage& img, const std::string& path);

// Reads a canonical PNG back (all channels identical grayscale copies).
CanonicalImage read_canonical_png(const std::string& path, int channels = 3);

}  // namespace danet::imaging
