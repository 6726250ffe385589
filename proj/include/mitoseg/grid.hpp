#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mitoseg {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Axis-aligned pixel rectangle (left, top, width, height).
struct Rect {
  int left = 0;
  int top = 0;
  int width = 0;
  int height = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Dense row-major 2D array.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
    assert(width >= 0 && height >= 0);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<T> row(int y) { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int x, int y) const {
    assert(contains(x, y));
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;
using Mask = Grid<std::uint8_t>;

/// Mirror an out-of-range index back into [0, n) without repeating the edge
/// sample (…, 2, 1, 0, 1, 2, …).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Bilinear sample with reflected borders.
template <class T>
double sample_bilinear(const Grid<T>& g, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  const int w = g.width();
  const int h = g.height();
  const int xa = reflect_index(x0, w), xb = reflect_index(x0 + 1, w);
  const int ya = reflect_index(y0, h), yb = reflect_index(y0 + 1, h);
  const double top = (1.0 - tx) * g(xa, ya) + tx * g(xb, ya);
  const double bottom = (1.0 - tx) * g(xa, yb) + tx * g(xb, yb);
  return (1.0 - ty) * top + ty * bottom;
}

/// Correlate every row with `kernel` (centered, odd length), reflected borders.
inline Image correlate_rows(const Image& src, std::span<const double> kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  Image out(src.width(), src.height());
  std::vector<float> padded(static_cast<std::size_t>(src.width() + 2 * radius));
  for (int y = 0; y < src.height(); ++y) {
    const auto in = src.row(y);
    for (int i = 0; i < static_cast<int>(padded.size()); ++i) padded[i] = in[reflect_index(i - radius, src.width())];
    auto dst = out.row(y);
    for (int x = 0; x < src.width(); ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * padded[x + k];
      dst[x] = static_cast<float>(acc);
    }
  }
  return out;
}

/// Correlate every column with `kernel` (centered, odd length), reflected borders.
inline Image correlate_cols(const Image& src, std::span<const double> kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = src.width();
  const int h = src.height();
  Image out(w, h);
  std::vector<double> acc(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < kernel.size(); ++k) {
      const auto in = src.row(reflect_index(y + static_cast<int>(k) - radius, h));
      const double c = kernel[k];
      for (int x = 0; x < w; ++x) acc[x] += c * in[x];
    }
    auto dst = out.row(y);
    for (int x = 0; x < w; ++x) dst[x] = static_cast<float>(acc[x]);
  }
  return out;
}

inline Image correlate_separable(const Image& src, std::span<const double> along_x, std::span<const double> along_y) {
  return correlate_cols(correlate_rows(src, along_x), along_y);
}

/// Sampled, unit-sum Gaussian with radius ceil(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// First-derivative-of-Gaussian correlation kernel, normalized so that it is
/// exact on linear ramps (sum k*i = 1).
inline std::vector<double> gaussian_d1_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double moment = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = i * std::exp(-0.5 * i * i / (sigma * sigma));
    moment += k[i + radius] * i;
  }
  for (auto& v : k) v /= moment;
  return k;
}

/// Second-derivative-of-Gaussian correlation kernel, normalized to zero sum and
/// exact on quadratics (sum k*i^2/2 = 1).
inline std::vector<double> gaussian_d2_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  const double s2 = sigma * sigma;
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) k[i + radius] = (i * i / s2 - 1.0) * std::exp(-0.5 * i * i / s2);
  double mean = 0.0;
  for (double v : k) mean += v;
  mean /= static_cast<double>(k.size());
  double moment = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] -= mean;
    moment += k[i + radius] * i * i * 0.5;
  }
  for (auto& v : k) v /= moment;
  return k;
}

inline Image gaussian_blur(const Image& src, double sigma) {
  const auto k = gaussian_kernel(sigma);
  return correlate_separable(src, k, k);
}

/// Rotate 90 degrees counter-clockwise in image display (x right, y down):
/// out(y, w-1-x) = in(x, y).
template <class T>
Grid<T> rotate90(const Grid<T>& g) {
  Grid<T> out(g.height(), g.width());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) out(y, g.width() - 1 - x) = g(x, y);
  return out;
}

}  // namespace mitoseg
