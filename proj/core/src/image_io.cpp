#include "danet/image_io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <stdexcept>

namespace danet::imaging {

RawImage read_image(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) {
    throw std::runtime_error("read_image: cannot decode " + path);
  }
  RawImage img;
  img.width = mat.cols;
  img.height = mat.rows;
  img.pixels.resize(static_cast<std::size_t>(mat.cols) * mat.rows);
  for (int r = 0; r < mat.rows; ++r) {
    const uchar* row = mat.ptr<uchar>(r);
    for (int c = 0; c < mat.cols; ++c) {
      img.at(r, c) = static_cast<double>(row[c]) / 255.0;
    }
  }
  return img;
}

void write_png(const CanonicalImage& img, const std::string& path) {
  cv::Mat mat(img.side, img.side, CV_8UC1);
  for (int r = 0; r < img.side; ++r) {
    uchar* row = mat.ptr<uchar>(r);
    for (int c = 0; c < img.side; ++c) {
      const double v = img.at(r, c, 0);
      row[c] = static_cast<uchar>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  if (!cv::imwrite(path, mat)) {
    throw std::runtime_error("write_png: cannot write " + path);
  }
}

CanonicalImage read_canonical_png(const std::string& path, int channels) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) {
    throw std::runtime_error("read_canonical_png: cannot decode " + path);
  }
  if (mat.cols != mat.rows) {
    throw std::runtime_error("read_canonical_png: image is not square: " + path);
  }
  CanonicalImage img;
  img.side = mat.cols;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(img.side) * img.side * channels, 0.0);
  for (int r = 0; r < img.side; ++r) {
    const uchar* row = mat.ptr<uchar>(r);
    for (int c = 0; c < img.side; ++c) {
      const double v = static_cast<double>(row[c]) / 255.0;
      for (int k = 0; k < channels; ++k) img.at(r, c, k) = v;
    }
  }
  return img;
}

}  // namespace danet::imaging
