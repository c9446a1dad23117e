#pragma once

// Deterministic random helpers. std::mt19937_64 with hand-rolled output maps,
// so the same seed gives the same matrices on every platform and compiler.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace krein {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  std::complex<double> complex_normal() {
    const double re = normal();
    const double im = normal();
    return {re, im};
  }

  Eigen::VectorXcd complex_vector(Eigen::Index n) {
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = complex_normal();
    return v;
  }

  Eigen::MatrixXcd complex_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXcd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = complex_normal();
    return m;
  }

  Eigen::MatrixXcd hermitian(Eigen::Index n) {
    Eigen::MatrixXcd a = complex_matrix(n, n);
    return 0.5 * (a + a.adjoint()).eval();
  }

  // n x k with orthonormal columns (Gram-Schmidt on a Gaussian block)
  Eigen::MatrixXcd orthonormal_cols(Eigen::Index n, Eigen::Index k) {
    Eigen::MatrixXcd q = complex_matrix(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < j; ++i)
        q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
      q.col(j) /= q.col(j).norm();
    }
    return q;
  }

  // Hermitian PSD with the given rank
  Eigen::MatrixXcd psd(Eigen::Index n, Eigen::Index rank) {
    Eigen::MatrixXcd b = complex_matrix(n, rank);
    return (b * b.adjoint()).eval();
  }

private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace krein
