#include <cmath>

#include "rpcag/errors.hpp"
#include "rpcag/graph.hpp"

namespace rpcag {

namespace {

struct Gradient {
  Vector dx;  // along rows (r -> r + 1)
  Vector dy;  // along columns (c -> c + 1)
};

void forward_gradient(const Vector& u, ImageShape s, Gradient& g) {
  for (Index c = 0; c < s.width; ++c)
    for (Index r = 0; r < s.height; ++r) {
      const Index k = s.offset(r, c);
      g.dx(k) = r + 1 < s.height ? u(s.offset(r + 1, c)) - u(k) : 0.0;
      g.dy(k) = c + 1 < s.width ? u(s.offset(r, c + 1)) - u(k) : 0.0;
    }
}

// Negative adjoint of forward_gradient.
void divergence(const Gradient& g, ImageShape s, Vector& out) {
  for (Index c = 0; c < s.width; ++c)
    for (Index r = 0; r < s.height; ++r) {
      const Index k = s.offset(r, c);
      double v = 0.0;
      if (r + 1 < s.height) v += g.dx(k);
      if (r > 0) v -= g.dx(s.offset(r - 1, c));
      if (c + 1 < s.width) v += g.dy(k);
      if (c > 0) v -= g.dy(s.offset(r, c - 1));
      out(k) = v;
    }
}

double tv_of(const Gradient& g) {
  return (g.dx.array().square() + g.dy.array().square()).sqrt().sum();
}

Vector denoise_column(const Vector& f, const Eigen::Array<bool, Eigen::Dynamic, 1>& observed,
                      ImageShape s, const TvOptions& opts) {
  const Index m = f.size();
  // tau * sigma * ||grad||^2 <= 1 with ||grad||^2 <= 8.
  const double tau = 1.0 / std::sqrt(8.0);
  const double sigma = tau;
  const Vector fidelity = observed.cast<double>().matrix();

  auto objective = [&](const Vector& u, Gradient& g) {
    forward_gradient(u, s, g);
    return 0.5 * (fidelity.array() * (u - f).array().square()).sum() + opts.weight * tv_of(g);
  };

  Gradient grad{Vector(m), Vector(m)};
  Gradient dual{Vector::Zero(m), Vector::Zero(m)};
  Vector u = f;
  Vector u_bar = f;
  Vector div(m);

  Vector best = f;
  double best_obj = objective(f, grad);

  for (int it = 0; it < opts.iters; ++it) {
    forward_gradient(u_bar, s, grad);
    dual.dx += sigma * grad.dx;
    dual.dy += sigma * grad.dy;
    for (Index k = 0; k < m; ++k) {
      const double norm = std::hypot(dual.dx(k), dual.dy(k));
      if (norm > opts.weight) {
        const double scale = opts.weight / norm;
        dual.dx(k) *= scale;
        dual.dy(k) *= scale;
      }
    }
    divergence(dual, s, div);
    Vector next = u + tau * div;
    next = (next.array() + tau * fidelity.array() * f.array()) / (1.0 + tau * fidelity.array());
    u_bar = 2.0 * next - u;
    u = std::move(next);

    const double obj = objective(u, grad);
    if (obj < best_obj) {
      best_obj = obj;
      best = u;
    }
  }
  return best;
}

}  // namespace

double total_variation(const Eigen::Ref<const Vector>& image, ImageShape shape) {
  if (image.size() != shape.pixels()) throw DataError("image size does not match its shape");
  Gradient g{Vector(image.size()), Vector(image.size())};
  forward_gradient(image, shape, g);
  return tv_of(g);
}

DataMatrix tv_denoise(const DataMatrix& x, const ObservationMask& mask, const TvOptions& opts) {
  if (!x.image_shape()) throw ConfigError("TV denoising requires image height/width");
  if (!(opts.weight > 0.0)) throw ConfigError("TV weight must be positive");
  if (opts.iters < 0) throw ConfigError("TV iteration count must be nonnegative");
  if (mask.rows() != x.features() || mask.cols() != x.samples())
    throw DataError("mask shape does not match the data matrix");
  if (opts.iters == 0) return x;

  const ImageShape shape = *x.image_shape();
  Matrix out(x.features(), x.samples());
  for (Index j = 0; j < x.samples(); ++j)
    out.col(j) = denoise_column(x.values().col(j), mask.bits().col(j), shape, opts);
  return DataMatrix(std::move(out), shape);
}

}  // namespace rpcag
