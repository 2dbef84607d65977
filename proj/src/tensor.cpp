#include "mtlsar/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "mtlsar/error.hpp"

namespace mtlsar {

std::string Shape::str() const {
  std::ostringstream out;
  out << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return out.str();
}

namespace {

void check_dims(const Shape& shape) {
  require(shape.n >= 1 && shape.c >= 1 && shape.h >= 1 && shape.w >= 1,
          "tensor dimensions must all be >= 1, got " + shape.str());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  check_dims(shape);
  data_.assign(shape.count(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  check_dims(shape);
  require(data_.size() == shape.count(), "tensor data length does not match shape " + shape.str());
}

std::size_t Tensor::offset(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
  if (b >= shape_.n || ch >= shape_.c || y >= shape_.h || x >= shape_.w) {
    std::ostringstream msg;
    msg << "tensor index (" << b << ", " << ch << ", " << y << ", " << x << ") out of range for shape "
        << shape_.str();
    fail(msg.str());
  }
  return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
}

double& Tensor::at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
  return data_[offset(b, ch, y, x)];
}

double Tensor::at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
  return data_[offset(b, ch, y, x)];
}

double* Tensor::plane(std::size_t b, std::size_t ch) { return data_.data() + offset(b, ch, 0, 0); }

const double* Tensor::plane(std::size_t b, std::size_t ch) const {
  return data_.data() + offset(b, ch, 0, 0);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  require(shape.count() == size(), "reshape from " + shape_.str() + " to " + shape.str() + " changes element count");
  return Tensor(shape, data_);
}

Tensor zero_pad(const Tensor& t, std::size_t pad) {
  if (pad == 0) return t;
  const Shape& s = t.shape();
  Tensor out(s.n, s.c, s.h + 2 * pad, s.w + 2 * pad);
  const std::size_t out_w = s.w + 2 * pad;
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      const double* src = t.plane(b, ch);
      double* dst = out.plane(b, ch);
      for (std::size_t y = 0; y < s.h; ++y) {
        std::copy_n(src + y * s.w, s.w, dst + (y + pad) * out_w + pad);
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const Shape& s = t.shape();
  require(y0 + h <= s.h && x0 + w <= s.w, "crop window exceeds tensor bounds " + s.str());
  Tensor out(s.n, s.c, h, w);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      const double* src = t.plane(b, ch);
      double* dst = out.plane(b, ch);
      for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(src + (y0 + y) * s.w + x0, w, dst + y * w);
      }
    }
  }
  return out;
}

Tensor center_crop(const Tensor& t, std::size_t pad) {
  if (pad == 0) return t;
  const Shape& s = t.shape();
  require(s.h > 2 * pad && s.w > 2 * pad, "center_crop removes the whole tensor");
  return crop(t, pad, pad, s.h - 2 * pad, s.w - 2 * pad);
}

Tensor gaussian_fill(Shape shape, double mean, double stddev, Rng& rng) {
  require(stddev >= 0.0, "gaussian_fill: stddev must be non-negative");
  Tensor out(shape);
  for (double& v : out.values()) v = stddev == 0.0 ? mean : rng.gaussian(mean, stddev);
  return out;
}

double inner_product(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "inner_product shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
          "concat_channels shape mismatch: " + sa.str() + " vs " + sb.str());
  Tensor out(sa.n, sa.c + sb.c, sa.h, sa.w);
  const std::size_t block_a = sa.c * sa.plane();
  const std::size_t block_b = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    double* dst = out.data() + n * (block_a + block_b);
    std::copy_n(a.data() + n * block_a, block_a, dst);
    std::copy_n(b.data() + n * block_b, block_b, dst + block_a);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first_channels) {
  const Shape& s = t.shape();
  require(first_channels >= 1 && first_channels < s.c, "split_channels: split point out of range");
  Tensor a(s.n, first_channels, s.h, s.w);
  Tensor b(s.n, s.c - first_channels, s.h, s.w);
  const std::size_t block_a = first_channels * s.plane();
  const std::size_t block_b = (s.c - first_channels) * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* src = t.data() + n * (block_a + block_b);
    std::copy_n(src, block_a, a.data() + n * block_a);
    std::copy_n(src + block_a, block_b, b.data() + n * block_b);
  }
  return {std::move(a), std::move(b)};
}

Tensor slice_batch(const Tensor& t, std::size_t b) {
  const Shape& s = t.shape();
  require(b < s.n, "slice_batch index out of range");
  const std::size_t block = s.c * s.plane();
  std::vector<double> values(t.data() + b * block, t.data() + (b + 1) * block);
  return Tensor(Shape{1, s.c, s.h, s.w}, std::move(values));
}

Tensor stack_batch(std::span<const Tensor> items) {
  require(!items.empty(), "stack_batch: no tensors");
  const Shape first = items.front().shape();
  std::vector<double> values;
  values.reserve(first.count() * items.size());
  std::size_t n = 0;
  for (const Tensor& item : items) {
    const Shape& s = item.shape();
    require(s.c == first.c && s.h == first.h && s.w == first.w, "stack_batch: mismatched shapes");
    values.insert(values.end(), item.values().begin(), item.values().end());
    n += s.n;
  }
  return Tensor(Shape{n, first.c, first.h, first.w}, std::move(values));
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require(dst.shape() == src.shape(), "add_inplace shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace mtlsar
