#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace legend {

// Dense row-major matrix; sized for the small (<= ~16 dim) problems here.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(int i, int j) { return a[i * cols + j]; }
  double operator()(int i, int j) const { return a[i * cols + j]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat scaled_identity(int n, double s) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = s;
    return m;
  }

  void matvec(const double* x, double* y) const {
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += a[i * cols + j] * x[j];
      y[i] = acc;
    }
  }

  bool is_zero() const {
    for (double v : a)
      if (v != 0.0) return false;
    return true;
  }
};

// Covariance matrix with constant diagonal / off-diagonal entries.
inline Mat make_cov(int n, double diag, double off) {
  Mat m(n, n, off);
  for (int i = 0; i < n; ++i) m(i, i) = diag;
  return m;
}

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues in `w`; columns of `v` are the eigenvectors.
inline void sym_eig(const Mat& s, std::vector<double>& w, Mat& v) {
  const int n = s.rows;
  Mat a = s;
  v = Mat::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double offsum = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) offsum += a(p, q) * a(p, q);
    if (offsum < 1e-30) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
  }
  w.resize(n);
  for (int i = 0; i < n; ++i) w[i] = a(i, i);
}

// Symmetric PSD square root via eigen-decomposition.
inline Mat sym_sqrt(const Mat& s) {
  if (s.rows != s.cols) throw std::invalid_argument("sym_sqrt: not square");
  std::vector<double> w;
  Mat v;
  sym_eig(s, w, v);
  const int n = s.rows;
  Mat r(n, n);
  for (int k = 0; k < n; ++k) {
    if (w[k] < -1e-10) throw std::invalid_argument("sym_sqrt: not PSD");
    const double sq = std::sqrt(std::max(w[k], 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r(i, j) += sq * v(i, k) * v(j, k);
  }
  return r;
}

}  // namespace legend
