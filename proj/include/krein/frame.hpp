#pragma once

// Frame weights: the diagonal Hilbert-Schmidt factor that sandwiches every
// resolvent. Weights are strictly positive and non-increasing; tail_bound
// records the Hilbert-Schmidt mass the truncation leaves out.

#include <krein/linalg.hpp>

#include <cmath>
#include <stdexcept>

namespace krein {

struct Frame {
  RVec weights;
  double tail_bound = 0.0;

  Eigen::Index dim() const { return weights.size(); }
  double hs_norm_sq() const { return weights.squaredNorm(); }

  void validate() const {
    if (weights.size() == 0)
      throw std::invalid_argument("frame: no weights");
    if (!(tail_bound >= 0.0))
      throw std::invalid_argument("frame: tail bound must be >= 0");
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
      if (!(weights(j) > 0.0) || !std::isfinite(weights(j)))
        throw std::invalid_argument("frame: weights must be positive");
      if (j > 0 && weights(j) > weights(j - 1))
        throw std::invalid_argument("frame: weights must be non-increasing");
    }
  }

  // kappa_j = 2^(-j/2), j = 1..n; truncated HS tail sums to 2^(-n)
  static Frame geometric(Eigen::Index n) {
    Frame f;
    f.weights = RVec(n);
    for (Eigen::Index j = 0; j < n; ++j)
      f.weights(j) = std::pow(2.0, -0.5 * static_cast<double>(j + 1));
    f.tail_bound = std::pow(2.0, -static_cast<double>(n));
    return f;
  }
};

// Coordinates of the same vector at another level of the weighted scale:
// moving from level `from` to level `to` multiplies by kappa^(from - to).
inline Vec hilbert_scale_rescale(const Vec& x, const Frame& frame, int from,
                                 int to) {
  if (x.size() != frame.dim())
    throw std::invalid_argument("rescale: dimension mismatch");
  if (from < -1 || from > 1 || to < -1 || to > 1)
    throw std::invalid_argument("rescale: level must be -1, 0 or 1");
  Vec out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    out(j) = x(j) * std::pow(frame.weights(j), from - to);
  return out;
}

}  // namespace krein
