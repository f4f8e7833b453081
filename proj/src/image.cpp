#include "mavos/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mavos/error.hpp"

namespace mavos {
namespace {

cv::Mat to_mat(const ImageRGB& image) {
  cv::Mat m(image.height, image.width, CV_32FC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < image.width; ++x)
      row[x] = cv::Vec3f(image.at(0, y, x), image.at(1, y, x), image.at(2, y, x));
  }
  return m;
}

ImageRGB from_mat(const cv::Mat& m) {
  ImageRGB out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x][c];
  }
  return out;
}

cv::Mat mask_to_float(const BinaryMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_32FC1);
  for (int y = 0; y < mask.height; ++y) {
    auto* row = m.ptr<float>(y);
    for (int x = 0; x < mask.width; ++x) row[x] = static_cast<float>(mask.at(y, x));
  }
  return m;
}

}  // namespace

FeatureMap<float> ImageRGB::as_map() const {
  FeatureMap<float> m(3, height, width);
  m.data = pixels;
  return m;
}

ImageRGB ImageRGB::from_map(const FeatureMap<float>& m) {
  if (m.c != 3) throw UsageError("ImageRGB::from_map expects 3 channels");
  ImageRGB out(m.h, m.w);
  out.pixels = m.data;
  return out;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

bool BinaryMask::is_binary() const {
  return std::all_of(pixels.begin(), pixels.end(), [](std::uint8_t v) { return v <= 1; });
}

ImageRGB read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image: " + path.string());
  ImageRGB out(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out.at(0, y, x) = row[x][2] / 255.0f;
      out.at(1, y, x) = row[x][1] / 255.0f;
      out.at(2, y, x) = row[x][0] / 255.0f;
    }
  }
  return out;
}

void write_image_png(const ImageRGB& image, const std::filesystem::path& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  auto q = [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x)
      row[x] = cv::Vec3b(q(image.at(2, y, x)), q(image.at(1, y, x)), q(image.at(0, y, x)));
  }
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image: " + path.string());
}

BinaryMask read_mask(const std::filesystem::path& path, MaskRule rule) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw DataError("cannot read mask: " + path.string());
  if (raw.depth() != CV_8U) {
    cv::Mat converted;
    raw.convertTo(converted, CV_8U, raw.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    raw = converted;
  }
  BinaryMask out(raw.rows, raw.cols);
  const int channels = raw.channels();
  for (int y = 0; y < raw.rows; ++y) {
    const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) {
      int value = 0;
      // Colour-coded annotations: the strongest channel decides.
      for (int c = 0; c < std::min(channels, 3); ++c) value = std::max<int>(value, row[x * channels + c]);
      out.at(y, x) = rule == MaskRule::kAnyNonzero ? (value != 0) : (value / 255.0 > 0.5);
    }
  }
  return out;
}

void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write mask: " + path.string());
}

ImageRGB resize_bicubic(const ImageRGB& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  cv::Mat dst;
  cv::resize(to_mat(image), dst, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
  ImageRGB out = from_mat(dst);
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int height, int width) {
  if (mask.height == height && mask.width == width) return mask;
  BinaryMask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / width));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

BinaryMask resize_bicubic_quantized(const BinaryMask& mask, int height, int width) {
  if (mask.height == height && mask.width == width) return mask;
  cv::Mat dst;
  cv::resize(mask_to_float(mask), dst, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
  BinaryMask out(height, width);
  for (int y = 0; y < height; ++y) {
    const auto* row = dst.ptr<float>(y);
    for (int x = 0; x < width; ++x) out.at(y, x) = row[x] > 0.5f;
  }
  return out;
}

std::vector<float> resize_plane_bicubic(const std::vector<float>& plane, int h, int w, int out_h,
                                        int out_w) {
  if (h == out_h && w == out_w) return plane;
  cv::Mat src(h, w, CV_32FC1, const_cast<float*>(plane.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_CUBIC);
  return std::vector<float>(dst.begin<float>(), dst.end<float>());
}

ImageRGB flip_horizontal(const ImageRGB& image) {
  ImageRGB out(image.height, image.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  return out;
}

}  // namespace mavos
