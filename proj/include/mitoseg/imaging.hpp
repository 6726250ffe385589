#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mitoseg/error.hpp"
#include "mitoseg/grid.hpp"
#include "mitoseg/settings.hpp"

namespace mitoseg {

/// One grayscale slice; intensities live in [0, 255].
struct Slice {
  int z = 0;
  double psize = 0.0;  // nm/px
  Image pixels;

  int width() const { return pixels.width(); }
  int height() const { return pixels.height(); }
};

struct SliceStack {
  std::vector<Slice> slices;
  Rect roi_applied;
};

namespace detail {

inline std::string extension_of(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace detail

/// Decode a PNG/BMP/TIFF slice. 8-bit data is taken as is, 16-bit data is
/// scaled by 255/65535, color is reduced to luminance.
inline Slice load_slice(const std::filesystem::path& path, int z, double psize) {
  const auto ext = detail::extension_of(path);
  if (ext != ".png" && ext != ".bmp" && ext != ".tif" && ext != ".tiff")
    throw FormatError("unsupported image format '" + ext + "' for " + path.string());
  if (!std::filesystem::exists(path)) throw IoError("cannot open " + path.string());
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  if (raw.empty()) throw IoError("failed to decode " + path.string());

  double scale = 1.0;
  switch (raw.depth()) {
    case CV_8U:
      break;
    case CV_16U:
      scale = 255.0 / 65535.0;
      break;
    default:
      throw FormatError("unsupported sample depth in " + path.string() + " (8- or 16-bit expected)");
  }
  const int channels = raw.channels();
  if (channels != 1 && channels != 3 && channels != 4)
    throw FormatError("unsupported channel count in " + path.string());

  cv::Mat as_float;
  raw.convertTo(as_float, CV_MAKETYPE(CV_64F, channels), scale);
  Slice s{z, psize, Image(raw.cols, raw.rows)};
  for (int y = 0; y < raw.rows; ++y) {
    const double* in = as_float.ptr<double>(y);
    for (int x = 0; x < raw.cols; ++x) {
      double v;
      if (channels == 1) {
        v = in[x];
      } else {  // OpenCV order is BGR(A)
        const double* px = in + static_cast<std::ptrdiff_t>(x) * channels;
        v = 0.114 * px[0] + 0.587 * px[1] + 0.299 * px[2];
      }
      s.pixels(x, y) = static_cast<float>(std::clamp(v, 0.0, 255.0));
    }
  }
  return s;
}

/// Smallest rectangle whose excluded border rows/columns are nearly constant
/// (variance below `variance_threshold`) on every slice.
inline Rect auto_roi(const SliceStack& stack, double variance_threshold, int min_size = 32) {
  if (stack.slices.empty()) throw ConfigurationError("auto_roi: empty stack");
  const int w = stack.slices.front().width();
  const int h = stack.slices.front().height();

  // active[i] is true when row/column i has variance >= threshold on any slice
  std::vector<bool> row_active(h, false), col_active(w, false);
  for (const auto& s : stack.slices) {
    for (int y = 0; y < h; ++y) {
      double sum = 0.0, sq = 0.0;
      for (float v : s.pixels.row(y)) {
        sum += v;
        sq += static_cast<double>(v) * v;
      }
      const double mean = sum / w;
      if (sq / w - mean * mean >= variance_threshold) row_active[y] = true;
    }
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, sq = 0.0;
      for (int y = 0; y < h; ++y) {
        const double v = s.pixels(x, y);
        sum += v;
        sq += v * v;
      }
      const double mean = sum / h;
      if (sq / h - mean * mean >= variance_threshold) col_active[x] = true;
    }
  }
  const auto first = [](const std::vector<bool>& a) {
    return static_cast<int>(std::find(a.begin(), a.end(), true) - a.begin());
  };
  const auto last = [](const std::vector<bool>& a) {
    return static_cast<int>(a.size()) - 1 - static_cast<int>(std::find(a.rbegin(), a.rend(), true) - a.rbegin());
  };
  const int top = first(row_active), bottom = last(row_active);
  const int left = first(col_active), right = last(col_active);
  const Rect r{left, top, right - left + 1, bottom - top + 1};
  if (top > bottom || left > right || r.width < min_size || r.height < min_size)
    throw DegenerateRoiError("region of interest collapsed below " + std::to_string(min_size) + "x" +
                             std::to_string(min_size) + " px; input looks content-free");
  return r;
}

inline Slice crop(const Slice& s, const Rect& r) {
  if (r.left < 0 || r.top < 0 || r.left + r.width > s.width() || r.top + r.height > s.height() || r.width <= 0 ||
      r.height <= 0)
    throw RangeError("region of interest lies outside the " + std::to_string(s.width()) + "x" +
                     std::to_string(s.height()) + " slice");
  Slice out{s.z, s.psize, Image(r.width, r.height)};
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) out.pixels(x, y) = s.pixels(r.left + x, r.top + y);
  return out;
}

/// Nearest-rank percentile of all pixel values.
inline double percentile(const Image& img, double pct) {
  std::vector<float> v(img.values().begin(), img.values().end());
  if (v.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank), v.end());
  return v[rank];
}

/// Clip at the two percentiles and stretch linearly onto [0, 255]. A collapsed
/// histogram (both percentiles equal) yields an all-zero slice.
inline Slice auto_contrast(const Slice& s, double low_pct, double high_pct) {
  if (!(low_pct >= 0.0 && low_pct < high_pct && high_pct <= 100.0))
    throw RangeError("auto_contrast: percentiles must satisfy 0 <= low < high <= 100");
  const double lo = percentile(s.pixels, low_pct);
  const double hi = percentile(s.pixels, high_pct);
  Slice out{s.z, s.psize, Image(s.width(), s.height())};
  if (!(hi > lo)) return out;
  const double gain = 255.0 / (hi - lo);
  auto dst = out.pixels.values();
  const auto src = s.pixels.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = src[i];
    dst[i] = v <= lo ? 0.0f : v >= hi ? 255.0f : static_cast<float>(std::clamp((v - lo) * gain, 0.0, 255.0));
  }
  return out;
}

/// Bilinear resampling to `target_psize`, pixel centers aligned.
inline Slice resample(const Slice& s, double target_psize, int min_dim = 8) {
  if (!(s.psize > 0.0) || !(target_psize > 0.0)) throw RangeError("resample: pixel sizes must be > 0");
  const double ratio = s.psize / target_psize;
  const int w = static_cast<int>(std::lround(s.width() * ratio));
  const int h = static_cast<int>(std::lround(s.height() * ratio));
  if (w < min_dim || h < min_dim)
    throw ResolutionError("resampled slice would be " + std::to_string(w) + "x" + std::to_string(h) +
                          " px, below the " + std::to_string(min_dim) + " px minimum");
  if (w == s.width() && h == s.height()) return Slice{s.z, target_psize, s.pixels};

  const double sx = static_cast<double>(s.width()) / w;
  const double sy = static_cast<double>(s.height()) / h;
  Slice out{s.z, target_psize, Image(w, h)};
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, s.height() - 1.0);
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, s.width() - 1.0);
      out.pixels(x, y) = static_cast<float>(std::clamp(sample_bilinear(s.pixels, fx, fy), 0.0, 255.0));
    }
  }
  return out;
}

/// Edge-preserving bilateral filter over a circular window of the given
/// diameter, reflected borders.
inline Image bilateral_filter(const Image& src, int diameter, double sigma_range, double sigma_spatial) {
  const int radius = std::max(0, diameter / 2);
  struct Tap {
    int dx, dy;
    double w;
  };
  std::vector<Tap> taps;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius)
        taps.push_back({dx, dy, std::exp(-0.5 * (dx * dx + dy * dy) / (sigma_spatial * sigma_spatial))});
  const double range_coeff = -0.5 / (sigma_range * sigma_range);

  Image out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const double center = src(x, y);
      double acc = 0.0, wsum = 0.0;
      for (const auto& t : taps) {
        const double v = src(reflect_index(x + t.dx, src.width()), reflect_index(y + t.dy, src.height()));
        const double d = v - center;
        const double w = t.w * std::exp(range_coeff * d * d);
        acc += w * v;
        wsum += w;
      }
      out(x, y) = static_cast<float>(acc / wsum);
    }
  }
  return out;
}

/// Bilateral then Gaussian filtering.
inline Slice smooth(const Slice& s, const AlgorithmSettings& settings) {
  Image filtered =
      bilateral_filter(s.pixels, settings.bilateral_diameter, settings.bilateral_sigma_range, settings.bilateral_sigma_spatial);
  return Slice{s.z, s.psize, gaussian_blur(filtered, settings.gaussian_sigma)};
}

/// Contrast, resampling and smoothing for a slice already cropped to the ROI.
inline Slice preprocess(const Slice& cropped, const AlgorithmSettings& settings) {
  const Slice stretched = auto_contrast(cropped, settings.contrast_low_pct, settings.contrast_high_pct);
  const Slice scaled = resample(stretched, settings.target_psize);
  return smooth(scaled, settings);
}

/// Round to 8-bit for persistence and display.
inline cv::Mat to_gray8(const Image& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x)
      row[x] = static_cast<std::uint8_t>(std::clamp(std::lround(img(x, y)), 0L, 255L));
  }
  return m;
}

inline std::vector<std::uint8_t> encode_png(const cv::Mat& m) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", m, bytes)) throw IoError("PNG encoding failed");
  return bytes;
}

inline Image image_from_gray8(const cv::Mat& m) {
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) img(x, y) = row[x];
  }
  return img;
}

}  // namespace mitoseg
