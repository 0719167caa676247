#pragma once

// Fixture builders shared by the unit and acceptance suites.

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

#include "dagb/raster.hpp"

namespace dagb::test {

inline RasterStack make_stack(const GridGeometry& g, std::vector<Band> bands, const std::string& epoch,
                              double nodata = -9999.0) {
  RasterStack s;
  s.geometry = g;
  s.nodata = nodata;
  s.bands = std::move(bands);
  s.epoch_label = epoch;
  s.validate();
  return s;
}

// n x p matrix of independent standard normals.
inline Eigen::MatrixXd random_design(std::mt19937_64& gen, Eigen::Index n, Eigen::Index p) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = z(gen);
  return X;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& gen, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = z(gen);
  return v;
}

// Residual sum of squares of y on [1 | X] through the normal equations in
// long double. Independent of the library's orthogonal factorisations;
// only for small, well-conditioned test problems.
inline double normal_equations_rss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  using LD = long double;
  const Eigen::Index n = X.rows(), p = X.cols() + 1;
  Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic> A(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0L;
    for (Eigen::Index j = 1; j < p; ++j) A(i, j) = static_cast<LD>(X(i, j - 1));
  }
  const Eigen::Matrix<LD, Eigen::Dynamic, 1> b = y.cast<LD>();
  const Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic> G = A.transpose() * A;
  const Eigen::Matrix<LD, Eigen::Dynamic, 1> beta = G.ldlt().solve(A.transpose() * b);
  const Eigen::Matrix<LD, Eigen::Dynamic, 1> r = b - A * beta;
  return static_cast<double>(r.squaredNorm());
}

}  // namespace dagb::test
