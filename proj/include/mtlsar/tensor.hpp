#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mtlsar/rng.hpp"

namespace mtlsar {

/// (batch, channel, rows, cols).
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense row-major 4-D array of doubles.
///
/// A default-constructed tensor is empty and holds no elements; every tensor
/// built from a shape has all four dimensions >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : Tensor(Shape{n, c, h, w}, fill) {}
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  /// Bounds-checked element access.
  double& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x);
  double at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const;
  double& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) { return at(b, ch, y, x); }
  double operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const { return at(b, ch, y, x); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the start of plane (b, ch).
  double* plane(std::size_t b, std::size_t ch);
  const double* plane(std::size_t b, std::size_t ch) const;

  void fill(double value);
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const;

  Shape shape_{};
  std::vector<double> data_;
};

Tensor zero_pad(const Tensor& t, std::size_t pad);

/// Inverse of zero_pad: drops `pad` rows/cols from every border.
Tensor center_crop(const Tensor& t, std::size_t pad);

/// Spatial window [y0, y0+h) x [x0, x0+w) of every plane.
Tensor crop(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

Tensor gaussian_fill(Shape shape, double mean, double stddev, Rng& rng);

double inner_product(const Tensor& a, const Tensor& b);

/// Stacks along the channel axis: (n, ca, h, w) ++ (n, cb, h, w).
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Splits the channel axis at `first_channels`; inverse of concat_channels.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first_channels);

/// Sample `b` as a (1, c, h, w) tensor.
Tensor slice_batch(const Tensor& t, std::size_t b);

/// Concatenates (1, c, h, w) tensors of equal shape along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace mtlsar
