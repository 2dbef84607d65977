#include <Eigen/Core>
#include <algorithm>
#include <atomic>

#include "mtlsar/error.hpp"
#include "mtlsar/layers.hpp"

namespace mtlsar {

namespace {

std::atomic<Fault> g_fault{Fault::none};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Geometry of one strided correlation: an input of (channels, in_h, in_w)
// scanned by a (kh, kw) window gives (out_h, out_w) positions.
struct Geometry {
  std::size_t channels, in_h, in_w;
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one sample into a (channels*kh*kw, out_h*out_w) patch matrix.
void im2col(const double* src, const Geometry& g, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = src + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? 0.0 : line[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds patch values back onto the input grid.
void col2im(const double* cols, const Geometry& g, double* dst) {
  std::fill_n(dst, g.channels * g.in_h * g.in_w, 0.0);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = dst + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          double* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Geometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

Geometry conv_geometry(const Shape& in, const Shape& kernel, std::size_t stride, std::size_t pad) {
  return Geometry{in.c,     in.h,   in.w,
                  kernel.h, kernel.w, stride, pad,
                  conv_output_size(in.h, kernel.h, stride, pad), conv_output_size(in.w, kernel.w, stride, pad)};
}

void add_row_sums(const double* grad, std::size_t channels, std::size_t plane, std::vector<double>& acc) {
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    const double* row = grad + c * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += row[i];
    acc[c] += sum;
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(stride >= 1 && kernel >= 1, "kernel and stride must be >= 1");
  const std::size_t padded = in + 2 * pad;
  require(padded >= kernel, "convolution output size would be non-positive");
  return (padded - kernel) / stride + 1;
}

std::size_t tconv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(stride >= 1 && kernel >= 1 && in >= 1, "kernel, stride and input size must be >= 1");
  const std::size_t full = (in - 1) * stride + kernel;
  require(full > 2 * pad, "transposed convolution output size would be non-positive");
  return full - 2 * pad;
}

ConvParams ConvParams::make(std::size_t out_ch, std::size_t in_ch, std::size_t kh, std::size_t kw,
                            std::size_t stride, std::size_t pad) {
  require(stride >= 1, "conv stride must be >= 1");
  ConvParams p;
  p.weight = Tensor(out_ch, in_ch, kh, kw);
  p.bias.assign(out_ch, 0.0);
  p.stride = stride;
  p.pad = pad;
  p.grad_weight = Tensor(out_ch, in_ch, kh, kw);
  p.grad_bias.assign(out_ch, 0.0);
  return p;
}

void ConvParams::zero_grad() {
  grad_weight.fill(0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

Tensor conv_forward(const Tensor& x, const ConvParams& p, ConvCache* cache) {
  const Shape& in = x.shape();
  const Shape& k = p.weight.shape();
  require(in.c == k.c, "conv_forward: input has " + std::to_string(in.c) + " channels, kernel expects " +
                           std::to_string(k.c));
  const Geometry g = conv_geometry(in, k, p.stride, p.pad);
  Tensor y(in.n, k.n, g.out_h, g.out_w);

  const ConstMatrixMap weights(p.weight.data(), static_cast<Eigen::Index>(k.n), static_cast<Eigen::Index>(g.rows()));
  std::vector<double> cols(is_pointwise(g) ? 0 : g.rows() * g.cols());
  for (std::size_t b = 0; b < in.n; ++b) {
    const double* patches = x.plane(b, 0);
    if (!cols.empty()) {
      im2col(x.plane(b, 0), g, cols.data());
      patches = cols.data();
    }
    MatrixMap out(y.plane(b, 0), static_cast<Eigen::Index>(k.n), static_cast<Eigen::Index>(g.cols()));
    out.noalias() = weights * ConstMatrixMap(patches, static_cast<Eigen::Index>(g.rows()),
                                             static_cast<Eigen::Index>(g.cols()));
    for (std::size_t o = 0; o < k.n; ++o) out.row(static_cast<Eigen::Index>(o)).array() += p.bias[o];
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->output_shape = y.shape();
  }
  return y;
}

void set_fault(Fault fault) { g_fault.store(fault); }
Fault active_fault() { return g_fault.load(); }

Tensor conv_backward(const Tensor& grad_out, const ConvCache& cache, ConvParams& p) {
  require(!cache.input.empty(), "conv_backward: empty cache");
  require(grad_out.shape() == cache.output_shape,
          "conv_backward: gradient shape " + grad_out.shape().str() + " does not match forward output " +
              cache.output_shape.str());
  const Shape& in = cache.input.shape();
  const Shape& k = p.weight.shape();
  require(in.c == k.c, "conv_backward: cache does not match parameters");
  const Geometry g = conv_geometry(in, k, p.stride, p.pad);

  Tensor grad_in(in);
  const auto out_ch = static_cast<Eigen::Index>(k.n);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  const ConstMatrixMap weights(p.weight.data(), out_ch, rows);
  MatrixMap grad_weights(p.grad_weight.data(), out_ch, rows);
  const bool pointwise = is_pointwise(g);
  std::vector<double> cols(pointwise ? 0 : g.rows() * g.cols());
  std::vector<double> grad_cols(pointwise ? 0 : g.rows() * g.cols());

  for (std::size_t b = 0; b < in.n; ++b) {
    const ConstMatrixMap dy(grad_out.plane(b, 0), out_ch, cols_n);
    const double* patches = cache.input.plane(b, 0);
    if (!pointwise) {
      im2col(cache.input.plane(b, 0), g, cols.data());
      patches = cols.data();
    }
    if (active_fault() == Fault::conv_backward_sign) {
      grad_weights.noalias() -= dy * ConstMatrixMap(patches, rows, cols_n).transpose();
    } else {
      grad_weights.noalias() += dy * ConstMatrixMap(patches, rows, cols_n).transpose();
    }
    add_row_sums(grad_out.plane(b, 0), k.n, g.cols(), p.grad_bias);

    if (pointwise) {
      MatrixMap(grad_in.plane(b, 0), rows, cols_n).noalias() = weights.transpose() * dy;
    } else {
      MatrixMap(grad_cols.data(), rows, cols_n).noalias() = weights.transpose() * dy;
      col2im(grad_cols.data(), g, grad_in.plane(b, 0));
    }
  }
  return grad_in;
}

TransposedConvParams TransposedConvParams::make(std::size_t in_ch, std::size_t out_ch, std::size_t kh,
                                                std::size_t kw, std::size_t stride, std::size_t pad) {
  require(stride >= 1, "transposed conv up-sampling factor must be >= 1");
  TransposedConvParams p;
  p.weight = Tensor(in_ch, out_ch, kh, kw);
  p.bias.assign(out_ch, 0.0);
  p.stride = stride;
  p.pad = pad;
  p.grad_weight = Tensor(in_ch, out_ch, kh, kw);
  p.grad_bias.assign(out_ch, 0.0);
  return p;
}

void TransposedConvParams::zero_grad() {
  grad_weight.fill(0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

namespace {

// The transposed layer runs the correlation geometry backwards: its output
// grid is the correlation's input and its input grid the correlation's output.
Geometry tconv_geometry(const Shape& in, const Shape& kernel, std::size_t stride, std::size_t pad) {
  const std::size_t out_h = tconv_output_size(in.h, kernel.h, stride, pad);
  const std::size_t out_w = tconv_output_size(in.w, kernel.w, stride, pad);
  return Geometry{kernel.c, out_h, out_w, kernel.h, kernel.w, stride, pad, in.h, in.w};
}

}  // namespace

Tensor tconv_forward(const Tensor& x, const TransposedConvParams& p, TransposedConvCache* cache) {
  const Shape& in = x.shape();
  const Shape& k = p.weight.shape();
  require(in.c == k.n, "tconv_forward: input has " + std::to_string(in.c) + " channels, kernel expects " +
                           std::to_string(k.n));
  const Geometry g = tconv_geometry(in, k, p.stride, p.pad);
  Tensor y(in.n, k.c, g.in_h, g.in_w);

  const auto in_ch = static_cast<Eigen::Index>(k.n);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  const ConstMatrixMap weights(p.weight.data(), in_ch, rows);
  std::vector<double> cols(g.rows() * g.cols());
  for (std::size_t b = 0; b < in.n; ++b) {
    MatrixMap(cols.data(), rows, cols_n).noalias() =
        weights.transpose() * ConstMatrixMap(x.plane(b, 0), in_ch, cols_n);
    col2im(cols.data(), g, y.plane(b, 0));
    for (std::size_t o = 0; o < k.c; ++o) {
      double* plane = y.plane(b, o);
      for (std::size_t i = 0; i < g.in_h * g.in_w; ++i) plane[i] += p.bias[o];
    }
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->output_shape = y.shape();
  }
  return y;
}

Tensor tconv_backward(const Tensor& grad_out, const TransposedConvCache& cache, TransposedConvParams& p) {
  require(!cache.input.empty(), "tconv_backward: empty cache");
  require(grad_out.shape() == cache.output_shape,
          "tconv_backward: gradient shape " + grad_out.shape().str() + " does not match forward output " +
              cache.output_shape.str());
  const Shape& in = cache.input.shape();
  const Shape& k = p.weight.shape();
  require(in.c == k.n, "tconv_backward: cache does not match parameters");
  const Geometry g = tconv_geometry(in, k, p.stride, p.pad);

  Tensor grad_in(in);
  const auto in_ch = static_cast<Eigen::Index>(k.n);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  const ConstMatrixMap weights(p.weight.data(), in_ch, rows);
  MatrixMap grad_weights(p.grad_weight.data(), in_ch, rows);
  std::vector<double> cols(g.rows() * g.cols());

  for (std::size_t b = 0; b < in.n; ++b) {
    im2col(grad_out.plane(b, 0), g, cols.data());
    const ConstMatrixMap patches(cols.data(), rows, cols_n);
    MatrixMap(grad_in.plane(b, 0), in_ch, cols_n).noalias() = weights * patches;
    grad_weights.noalias() += ConstMatrixMap(cache.input.plane(b, 0), in_ch, cols_n) * patches.transpose();
    add_row_sums(grad_out.plane(b, 0), k.c, g.in_h * g.in_w, p.grad_bias);
  }
  return grad_in;
}

}  // namespace mtlsar
