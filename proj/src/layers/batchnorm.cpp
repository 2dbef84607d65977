#include <algorithm>
#include <cmath>

#include "mtlsar/error.hpp"
#include "mtlsar/layers.hpp"

namespace mtlsar {

BNParams BNParams::make(std::size_t channels, double eps, double momentum) {
  require(channels >= 1, "batch norm needs at least one channel");
  require(eps > 0.0, "batch norm eps must be positive");
  require(momentum > 0.0 && momentum < 1.0, "batch norm momentum must lie in (0, 1)");
  BNParams p;
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.eps = eps;
  p.momentum = momentum;
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  p.grad_gamma.assign(channels, 0.0);
  p.grad_beta.assign(channels, 0.0);
  return p;
}

void BNParams::zero_grad() {
  std::fill(grad_gamma.begin(), grad_gamma.end(), 0.0);
  std::fill(grad_beta.begin(), grad_beta.end(), 0.0);
}

Tensor bn_forward(const Tensor& x, BNParams& p, Mode mode, BNCache* cache) {
  const Shape& s = x.shape();
  require(s.c == p.channels(), "bn_forward: input has " + std::to_string(s.c) + " channels, parameters have " +
                                   std::to_string(p.channels()));
  const std::size_t plane = s.plane();
  const auto m = static_cast<double>(s.n * plane);

  std::vector<double> mean(s.c), var(s.c);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (std::size_t b = 0; b < s.n; ++b) {
        const double* src = x.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      }
      mean[c] = sum / m;
      double sq = 0.0;
      for (std::size_t b = 0; b < s.n; ++b) {
        const double* src = x.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mean[c];
          sq += d * d;
        }
      }
      var[c] = sq / m;
    }
    for (std::size_t c = 0; c < s.c; ++c) {
      if (p.has_running_stats) {
        p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0 - p.momentum) * mean[c];
        p.running_var[c] = p.momentum * p.running_var[c] + (1.0 - p.momentum) * var[c];
      } else {
        p.running_mean[c] = mean[c];
        p.running_var[c] = var[c];
      }
    }
    p.has_running_stats = true;
  } else {
    if (!p.has_running_stats) {
      throw Error(ErrorKind::invalid_argument, "bn_forward: eval mode with uninitialized statistics");
    }
    mean = p.running_mean;
    var = p.running_var;
  }

  Tensor y(s);
  Tensor normalized(s);
  std::vector<double> inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] + p.eps);
    for (std::size_t b = 0; b < s.n; ++b) {
      const double* src = x.plane(b, c);
      double* xh = normalized.plane(b, c);
      double* dst = y.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean[c]) * inv_std[c];
        dst[i] = p.gamma[c] * xh[i] + p.beta[c];
      }
    }
  }
  if (cache != nullptr) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor bn_backward(const Tensor& grad_out, const BNCache& cache, BNParams& p) {
  require(!cache.normalized.empty(), "bn_backward: empty cache");
  require(grad_out.shape() == cache.normalized.shape(), "bn_backward: gradient shape does not match forward");
  const Shape& s = grad_out.shape();
  require(s.c == p.channels(), "bn_backward: cache does not match parameters");
  const std::size_t plane = s.plane();
  const auto m = static_cast<double>(s.n * plane);

  Tensor grad_in(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < s.n; ++b) {
      const double* dy = grad_out.plane(b, c);
      const double* xh = cache.normalized.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    p.grad_beta[c] += sum_dy;
    p.grad_gamma[c] += sum_dy_xhat;

    const double scale = p.gamma[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < s.n; ++b) {
      const double* dy = grad_out.plane(b, c);
      const double* xh = cache.normalized.plane(b, c);
      double* dx = grad_in.plane(b, c);
      if (cache.mode == Mode::eval) {
        for (std::size_t i = 0; i < plane; ++i) dx[i] = scale * dy[i];
      } else {
        // Exact Jacobian through the batch mean and variance.
        for (std::size_t i = 0; i < plane; ++i) {
          dx[i] = scale * (dy[i] - sum_dy / m - xh[i] * sum_dy_xhat / m);
        }
      }
    }
  }
  return grad_in;
}

}  // namespace mtlsar
