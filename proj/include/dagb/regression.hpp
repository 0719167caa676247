#pragma once

// Ordinary least squares with an intercept, plus the diagnostics used for
// model selection: adjusted R^2, BIC and variance inflation factors.
//
// Columns are centred (absorbing the intercept) and scaled to unit norm
// before factorisation, so the rank test and the VIFs do not depend on the
// units of the predictors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dagb/error.hpp"
#include "dagb/summation.hpp"

namespace dagb {

// Smallest-to-largest singular value ratio below which a design is singular.
inline constexpr double kRankTolerance = 1e-10;
// BIC values closer than this are treated as tied.
inline constexpr double kBicTieTolerance = 1e-9;

// BIC = n ln(rss/n) + (p + 1) ln(n), dropping the n ln(2 pi) + n constant.
// A perfect fit (rss == 0) has no finite value and ranks ahead of everything.
struct BicScore {
  bool perfect = false;
  double value = 0.0;

  bool operator==(const BicScore&) const = default;
};

inline BicScore bic(double rss, std::size_t n, std::size_t p) {
  if (n == 0) throw RangeError("BIC needs n > 0");
  if (!(rss >= 0.0)) throw RangeError("BIC needs rss >= 0");
  if (rss == 0.0) return {true, 0.0};
  const double dn = static_cast<double>(n);
  return {false, dn * std::log(rss / dn) + static_cast<double>(p + 1) * std::log(dn)};
}

// Three-way comparison with the tie tolerance applied; callers break ties.
inline std::weak_ordering compare_bic(const BicScore& a, const BicScore& b) noexcept {
  if (a.perfect || b.perfect) {
    if (a.perfect && b.perfect) return std::weak_ordering::equivalent;
    return a.perfect ? std::weak_ordering::less : std::weak_ordering::greater;
  }
  if (std::fabs(a.value - b.value) <= kBicTieTolerance) return std::weak_ordering::equivalent;
  return a.value < b.value ? std::weak_ordering::less : std::weak_ordering::greater;
}

struct OlsFit {
  double intercept = 0.0;
  std::vector<double> coefficients;
  std::size_t n = 0;
  std::size_t p = 0;
  double rss = 0.0;
  double tss = 0.0;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  BicScore bic;
  std::vector<double> residuals;

  double predict(std::span<const double> x) const {
    CompensatedSum acc;
    acc.add(intercept);
    for (std::size_t j = 0; j < coefficients.size(); ++j) acc.add(coefficients[j] * x[j]);
    return acc.value();
  }
};

namespace detail {

struct CentredDesign {
  Eigen::MatrixXd scaled;  // centred, unit-norm columns
  Eigen::VectorXd means;
  Eigen::VectorXd norms;
};

inline double column_mean(const Eigen::Ref<const Eigen::VectorXd>& v) {
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc.add(v(i));
  return acc.value() / static_cast<double>(v.size());
}

// Centres and normalises; a column that is constant (up to rounding) is
// collinear with the intercept and reported as singular.
inline CentredDesign centre_and_scale(const Eigen::MatrixXd& X) {
  CentredDesign d;
  const Eigen::Index n = X.rows(), p = X.cols();
  d.scaled.resize(n, p);
  d.means.resize(p);
  d.norms.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = column_mean(X.col(j));
    d.means(j) = mean;
    d.scaled.col(j) = X.col(j).array() - mean;
    const double norm = d.scaled.col(j).norm();
    const double scale = std::max(X.col(j).cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if (!(norm > 1e-12 * scale * std::sqrt(static_cast<double>(n))))
      throw SingularDesignError("predictor column " + std::to_string(j) + " is constant");
    d.norms(j) = norm;
    d.scaled.col(j) /= norm;
  }
  return d;
}

inline Eigen::VectorXd centred(const Eigen::VectorXd& y, double& mean) {
  mean = column_mean(y);
  return y.array() - mean;
}

inline double sum_squares(const Eigen::VectorXd& v) {
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc.add(v(i) * v(i));
  return acc.value();
}

}  // namespace detail

inline OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = static_cast<std::size_t>(X.cols());
  if (static_cast<std::size_t>(y.size()) != n) throw RangeError("response length does not match design rows");
  if (n < p + 2)
    throw RangeError("least squares needs n >= p + 2 (n = " + std::to_string(n) + ", p = " + std::to_string(p) + ")");

  OlsFit fit;
  fit.n = n;
  fit.p = p;
  double ybar = 0.0;
  const Eigen::VectorXd yc = detail::centred(y, ybar);
  fit.tss = detail::sum_squares(yc);

  Eigen::VectorXd resid = yc;
  fit.coefficients.assign(p, 0.0);
  fit.intercept = ybar;
  if (p > 0) {
    const auto d = detail::centre_and_scale(X);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d.scaled);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) >= kRankTolerance * sv(0)))
      throw SingularDesignError("design matrix is rank deficient (singular value ratio " +
                                std::to_string(sv(sv.size() - 1) / sv(0)) + ")");
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(d.scaled);
    const Eigen::VectorXd gamma = qr.solve(yc);
    resid = yc - d.scaled * gamma;
    CompensatedSum icpt;
    icpt.add(ybar);
    for (std::size_t j = 0; j < p; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      fit.coefficients[j] = gamma(jj) / d.norms(jj);
      icpt.add(-fit.coefficients[j] * d.means(jj));
    }
    fit.intercept = icpt.value();
  }

  fit.rss = detail::sum_squares(resid);
  // Residuals at rounding level relative to the response are an exact fit.
  if (fit.rss <= 1e-24 * fit.tss || fit.tss == 0.0) {
    fit.rss = 0.0;
  }
  fit.residuals.assign(resid.data(), resid.data() + resid.size());
  fit.r2 = fit.tss > 0.0 ? std::clamp(1.0 - fit.rss / fit.tss, 0.0, 1.0) : 1.0;
  const double dn = static_cast<double>(n);
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * (dn - 1.0) / (dn - static_cast<double>(p) - 1.0);
  fit.bic = bic(fit.rss, n, p);
  return fit;
}

// Residual sum of squares of y on [1 | X] by rank-revealing QR. Tolerates
// rank-deficient X (the projection is still well defined).
inline double least_squares_rss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  double ybar = 0.0;
  const Eigen::VectorXd yc = detail::centred(y, ybar);
  if (X.cols() == 0) return detail::sum_squares(yc);
  Eigen::MatrixXd Z = X;
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    Z.col(j).array() -= detail::column_mean(Z.col(j));
    const double norm = Z.col(j).norm();
    if (norm > 0.0) Z.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(kRankTolerance);
  const Eigen::VectorXd gamma = qr.solve(yc);
  return detail::sum_squares(yc - Z * gamma);
}

// VIF_j = 1 / (1 - R^2_j), R^2_j from regressing column j on the other
// columns plus an intercept. Exact collinearity yields +infinity.
inline std::vector<double> vif(const Eigen::MatrixXd& X) {
  const Eigen::Index p = X.cols();
  std::vector<double> out(static_cast<std::size_t>(p), 1.0);
  if (p < 2) return out;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd others(X.rows(), p - 1);
    for (Eigen::Index k = 0, c = 0; k < p; ++k)
      if (k != j) others.col(c++) = X.col(k);
    double mean = 0.0;
    const Eigen::VectorXd target = X.col(j);
    const double tss = detail::sum_squares(detail::centred(target, mean));
    if (!(tss > 0.0)) throw RangeError("VIF undefined for a constant column");
    const double unexplained = least_squares_rss(others, target) / tss;
    out[static_cast<std::size_t>(j)] =
        unexplained <= kRankTolerance ? std::numeric_limits<double>::infinity() : 1.0 / unexplained;
  }
  return out;
}

inline double max_vif(const Eigen::MatrixXd& X) {
  double m = X.cols() > 0 ? 1.0 : 0.0;
  for (double v : vif(X)) m = std::max(m, v);
  return m;
}

}  // namespace dagb
