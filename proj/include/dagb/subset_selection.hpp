#pragma once

// Best-subset regression search.
//
// best_subsets_bnb walks the forward inclusion tree (each subset reached
// once, columns added in increasing position order) and prunes with the
// classical monotonicity bound: adding columns never increases the residual
// sum of squares, so rss(F + {i, ..., p-1}) bounds every subset below the
// child F + {i}. The bounds for all children of a node come out of a
// single reverse-order Gram-Schmidt sweep over the remaining columns.
//
// exhaustive_best_subsets enumerates every subset through an independent
// rank-revealing QR and serves as the oracle for the search.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dagb/error.hpp"
#include "dagb/features.hpp"
#include "dagb/regression.hpp"

namespace dagb {

inline constexpr double kVifLimit = 5.0;
inline constexpr std::size_t kExhaustiveGuard = std::size_t{1} << 20;

struct SubsetResult {
  std::vector<std::size_t> columns;  // ascending column indices
  double rss = 0.0;
};

struct BestSubsets {
  std::size_t k_max = 0;  // effective value after clamping
  bool clamped = false;
  std::vector<std::vector<SubsetResult>> by_size;  // by_size[k - 1], best first
  std::size_t nodes_visited = 0;
};

namespace detail {

inline bool subset_before(const SubsetResult& a, const SubsetResult& b) {
  if (a.rss != b.rss) return a.rss < b.rss;
  return a.columns < b.columns;
}

// Keeps the m best subsets of one size.
class TopM {
public:
  explicit TopM(std::size_t m) : m_(m) {}

  bool full() const noexcept { return items_.size() >= m_; }
  double threshold() const noexcept {
    return full() ? items_.back().rss : std::numeric_limits<double>::infinity();
  }

  void offer(SubsetResult r) {
    if (full() && !subset_before(r, items_.back())) return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), r, subset_before);
    items_.insert(pos, std::move(r));
    if (items_.size() > m_) items_.pop_back();
  }

  std::vector<SubsetResult> take() && { return std::move(items_); }

private:
  std::size_t m_;
  std::vector<SubsetResult> items_;
};

inline void check_search_args(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t& k_max,
                              std::size_t m, bool& clamped) {
  const auto p = static_cast<std::size_t>(X.cols());
  if (p == 0) throw RangeError("subset search needs at least one candidate column");
  if (static_cast<std::size_t>(y.size()) != static_cast<std::size_t>(X.rows()))
    throw RangeError("response length does not match design rows");
  if (k_max == 0) throw RangeError("k_max must be >= 1");
  if (m == 0) throw RangeError("m must be >= 1");
  clamped = false;
  if (k_max >= p) {
    clamped = k_max > p;
    k_max = p;
  }
  if (static_cast<std::size_t>(X.rows()) < k_max + 2)
    throw RangeError("subset search needs n >= k_max + 2 (n = " + std::to_string(X.rows()) +
                     ", k_max = " + std::to_string(k_max) + ")");
}

// Orthogonalises v against the unit columns in basis (two MGS passes).
// Returns false when v lies in their span.
inline bool orthonormalise(Eigen::VectorXd& v, const std::vector<Eigen::VectorXd>& basis, double ref_norm) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& q : basis) v -= q.dot(v) * q;
  const double norm = v.norm();
  if (!(norm > kRankTolerance * ref_norm)) return false;
  v /= norm;
  return true;
}

class BranchAndBound {
public:
  BranchAndBound(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t k_max, std::size_t m)
      : k_max_(k_max) {
    const Eigen::Index n = X.rows();
    const auto p = static_cast<std::size_t>(X.cols());
    double ybar = 0.0;
    y_ = centred(y, ybar);
    tss_ = sum_squares(y_);

    cols_.resize(p);
    std::vector<double> single_rss(p);
    for (std::size_t j = 0; j < p; ++j) {
      Eigen::VectorXd c = X.col(static_cast<Eigen::Index>(j));
      c.array() -= column_mean(c);
      const double norm = c.norm();
      const double scale = std::max(X.col(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff(),
                                    std::numeric_limits<double>::min());
      if (!(norm > 1e-12 * scale * std::sqrt(static_cast<double>(n))))
        throw RangeError("candidate column " + std::to_string(j) + " is constant");
      c /= norm;
      const double r = c.dot(y_);
      single_rss[j] = tss_ - r * r;
      cols_[j] = std::move(c);
    }
    // Strongest single predictors first: the weak tail then forms the
    // suffix sets whose bounds prune.
    order_.resize(p);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return single_rss[a] < single_rss[b]; });
    for (std::size_t k = 0; k < k_max_; ++k) tops_.emplace_back(m);
  }

  BestSubsets run() {
    std::vector<Eigen::VectorXd> basis;
    std::vector<std::size_t> path;
    visit(basis, path, y_, tss_, 0);
    BestSubsets out;
    out.k_max = k_max_;
    out.nodes_visited = nodes_;
    for (auto& t : tops_) out.by_size.push_back(std::move(t).take());
    return out;
  }

private:
  double margin(double thr) const noexcept { return thr + 1e-8 * thr + 1e-13 * tss_; }

  // True if nothing of size in [lo, hi] reachable with lower bound `bound`
  // can enter the top-m lists.
  bool prunable(double bound, std::size_t lo, std::size_t hi) const {
    for (std::size_t s = lo; s <= hi; ++s)
      if (!(bound > margin(tops_[s - 1].threshold()))) return false;
    return true;
  }

  void visit(const std::vector<Eigen::VectorXd>& basis, std::vector<std::size_t>& path,
             const Eigen::VectorXd& resid, double rss, std::size_t first) {
    const std::size_t p = order_.size();
    const std::size_t depth = path.size();
    if (depth >= k_max_ || first >= p) return;

    // suffix[i] = rss(F + {i..p-1}), non-decreasing in i. Computed on first
    // use, once some top-m list is full enough for a bound to matter.
    std::vector<double> suffix;
    bool bounded = false;
    const bool bound_possible = basis.size() + (p - first) + 1 < static_cast<std::size_t>(y_.size());
    auto ensure_bounds = [&](std::size_t lo, std::size_t hi) {
      if (bounded || !bound_possible) return;
      bool any_full = false;
      for (std::size_t s = lo; s <= hi; ++s) any_full = any_full || tops_[s - 1].full();
      if (!any_full) return;
      suffix.assign(p + 1, 0.0);
      std::vector<Eigen::VectorXd> work = basis;
      Eigen::VectorXd e = resid;
      double r = rss;
      suffix[p] = rss;
      for (std::size_t i = p; i-- > first;) {
        Eigen::VectorXd q = cols_[order_[i]];
        if (orthonormalise(q, work, 1.0)) {
          e -= q.dot(e) * q;
          r = sum_squares(e);
          work.push_back(std::move(q));
        }
        suffix[i] = r;
      }
      bounded = true;
    };

    for (std::size_t i = first; i < p; ++i) {
      const std::size_t reach = std::min(k_max_, depth + (p - i));
      ensure_bounds(depth + 1, reach);
      if (bounded && prunable(suffix[i], depth + 1, reach)) break;
      ++nodes_;

      Eigen::VectorXd q = cols_[order_[i]];
      std::vector<Eigen::VectorXd> child_basis = basis;
      Eigen::VectorXd e = resid;
      double child_rss = rss;
      if (orthonormalise(q, basis, 1.0)) {
        e -= q.dot(e) * q;
        child_rss = sum_squares(e);
        child_basis.push_back(std::move(q));
      }
      if (child_rss <= 1e-24 * tss_) child_rss = 0.0;

      path.push_back(order_[i]);
      SubsetResult cand{path, child_rss};
      std::sort(cand.columns.begin(), cand.columns.end());
      tops_[depth].offer(std::move(cand));

      // Descendants of this child are subsets of F + {i..p-1}.
      const bool deeper = depth + 1 < k_max_ && i + 1 < p;
      if (deeper && !(bounded && prunable(suffix[i], depth + 2, reach)))
        visit(child_basis, path, e, child_rss, i + 1);
      path.pop_back();
    }
  }

  std::size_t k_max_;
  Eigen::VectorXd y_;
  double tss_ = 0.0;
  std::vector<Eigen::VectorXd> cols_;
  std::vector<std::size_t> order_;
  std::vector<TopM> tops_;
  std::size_t nodes_ = 0;
};

}  // namespace detail

// For each size k in 1..k_max, the m subsets with the smallest rss (fits
// include an intercept). k_max >= column count is clamped.
inline BestSubsets best_subsets_bnb(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t k_max,
                                    std::size_t m) {
  bool clamped = false;
  detail::check_search_args(X, y, k_max, m, clamped);
  auto out = detail::BranchAndBound(X, y, k_max, m).run();
  out.clamped = clamped;
  return out;
}

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline BestSubsets exhaustive_best_subsets(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t k_max,
                                           std::size_t m) {
  bool clamped = false;
  detail::check_search_args(X, y, k_max, m, clamped);
  const auto p = static_cast<std::size_t>(X.cols());
  std::size_t total = 0;
  for (std::size_t k = 1; k <= k_max; ++k) total += binomial(p, k);
  if (total > kExhaustiveGuard)
    throw RangeError("exhaustive search would fit " + std::to_string(total) + " subsets (limit " +
                     std::to_string(kExhaustiveGuard) + ")");

  BestSubsets out;
  out.k_max = k_max;
  out.clamped = clamped;
  for (std::size_t k = 1; k <= k_max; ++k) {
    detail::TopM top(m);
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (;;) {
      Eigen::MatrixXd sub(X.rows(), static_cast<Eigen::Index>(k));
      for (std::size_t c = 0; c < k; ++c) sub.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(idx[c]));
      double rss = least_squares_rss(sub, y);
      double ybar = 0.0;
      if (rss <= 1e-24 * detail::sum_squares(detail::centred(y, ybar))) rss = 0.0;
      top.offer({idx, rss});
      ++out.nodes_visited;
      // next combination
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == p - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    out.by_size.push_back(std::move(top).take());
  }
  return out;
}

struct CandidateModel {
  std::vector<std::size_t> columns;
  std::vector<std::string> term_names;
  double rss = 0.0;
  BicScore bic;
  double max_vif = 1.0;  // +infinity under exact collinearity
  bool feasible = false;  // max_vif < 5
};

// A fitted linear model for plot-level change, ready for prediction.
struct ModelFit {
  ModelMode mode = ModelMode::uni_temporal;
  std::vector<TermSpec> terms;
  double intercept = 0.0;
  std::vector<double> coefficients;  // aligned with terms
  std::size_t n = 0;
  double adj_r2 = 0.0;
  BicScore bic;
  double max_vif = 1.0;
  std::vector<TermRange> ranges;  // training min/max, aligned with terms
};

// Orders candidates by BIC; ties go to fewer predictors, then to the
// lexicographically smaller tuple of canonical term names.
inline bool candidate_before(const CandidateModel& a, const CandidateModel& b) {
  const auto c = compare_bic(a.bic, b.bic);
  if (c != 0) return c < 0;
  if (a.columns.size() != b.columns.size()) return a.columns.size() < b.columns.size();
  return a.term_names < b.term_names;
}

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd sub(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(cols[c]));
  return sub;
}

// Pools the per-size candidates, scores them and returns them best first.
inline std::vector<CandidateModel> rank_candidates(const FeatureMatrix& X, const Eigen::VectorXd& y,
                                                   std::size_t k_max, std::size_t m) {
  const auto best = best_subsets_bnb(X.values, y, k_max, m);
  const auto n = static_cast<std::size_t>(X.values.rows());
  std::vector<CandidateModel> pool;
  for (const auto& level : best.by_size) {
    for (const auto& s : level) {
      CandidateModel c;
      c.columns = s.columns;
      for (auto j : s.columns) c.term_names.push_back(X.terms[j].name());
      c.rss = s.rss;
      c.bic = bic(s.rss, n, s.columns.size());
      c.max_vif = max_vif(select_columns(X.values, s.columns));
      c.feasible = c.max_vif < kVifLimit;
      pool.push_back(std::move(c));
    }
  }
  std::stable_sort(pool.begin(), pool.end(), candidate_before);
  return pool;
}

// Two-step selection: best subsets by rss per size, then the lowest-BIC
// candidate whose largest VIF is below 5.
inline ModelFit select_model(const FeatureMatrix& X, const Eigen::VectorXd& y, ModelMode mode, std::size_t k_max,
                             std::size_t m) {
  const auto pool = rank_candidates(X, y, k_max, m);
  const auto it = std::find_if(pool.begin(), pool.end(), [](const CandidateModel& c) { return c.feasible; });
  if (it == pool.end()) {
    std::string msg = "no candidate model has max VIF < 5";
    if (!pool.empty()) {
      msg += "; best infeasible candidate:";
      for (const auto& t : pool.front().term_names) msg += " " + t;
      msg += " (max VIF " + std::to_string(pool.front().max_vif) + ")";
    }
    throw SelectionInfeasibleError(msg);
  }

  const Eigen::MatrixXd sub = select_columns(X.values, it->columns);
  const OlsFit fit = ols_fit(sub, y);
  ModelFit model;
  model.mode = mode;
  for (auto j : it->columns) {
    model.terms.push_back(X.terms[j]);
    model.ranges.push_back(X.ranges[j]);
  }
  model.intercept = fit.intercept;
  model.coefficients = fit.coefficients;
  model.n = fit.n;
  model.adj_r2 = fit.adj_r2;
  model.bic = fit.bic;
  model.max_vif = it->max_vif;
  return model;
}

}  // namespace dagb
