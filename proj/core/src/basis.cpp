#include "geodisagg/basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "geodisagg/error.hpp"

namespace geodisagg {

CorrelationFamily parse_family(std::string_view name) {
  if (name == "exponential") return CorrelationFamily::exponential;
  if (name == "matern32") return CorrelationFamily::matern32;
  if (name == "spherical") return CorrelationFamily::spherical;
  if (name == "circular") return CorrelationFamily::circular;
  throw UsageError("unknown correlation family '" + std::string(name) +
                   "' (expected exponential, matern32, spherical or circular)");
}

std::string to_string(CorrelationFamily family) {
  switch (family) {
    case CorrelationFamily::exponential: return "exponential";
    case CorrelationFamily::matern32: return "matern32";
    case CorrelationFamily::spherical: return "spherical";
    case CorrelationFamily::circular: return "circular";
  }
  return "unknown";
}

namespace {

inline double correlation_unchecked(CorrelationFamily family, double rho, double d) {
  const double t = rho * d;
  switch (family) {
    case CorrelationFamily::exponential:
      return std::exp(-t);
    case CorrelationFamily::matern32:
      return std::exp(-t) * (1.0 + t);
    case CorrelationFamily::spherical:
      return t <= 1.0 ? 1.0 - 1.5 * t + 0.5 * t * t * t : 0.0;
    case CorrelationFamily::circular: {
      const double v = std::min(t, 1.0);
      return std::max(0.0, 1.0 - (2.0 / std::numbers::pi) * (v * std::sqrt(1.0 - v * v) + std::asin(v)));
    }
  }
  return 0.0;
}

void check_rho(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw DomainError("correlation parameter rho must be positive and finite, got " + std::to_string(rho));
  }
}

}  // namespace

double correlation(CorrelationFamily family, double rho, double d) {
  check_rho(rho);
  if (!(d >= 0.0)) throw DomainError("distance must be nonnegative");
  return correlation_unchecked(family, rho, d);
}

Eigen::MatrixXd correlation_matrix(CorrelationFamily family, double rho, const Eigen::MatrixXd& distances) {
  check_rho(rho);
  const auto t = (rho * distances.array()).eval();
  switch (family) {
    case CorrelationFamily::exponential:
      return (-t).exp().matrix();
    case CorrelationFamily::matern32:
      return ((-t).exp() * (1.0 + t)).matrix();
    default:
      break;
  }
  Eigen::MatrixXd out(distances.rows(), distances.cols());
  for (Eigen::Index j = 0; j < distances.cols(); ++j) {
    for (Eigen::Index i = 0; i < distances.rows(); ++i) {
      out(i, j) = correlation_unchecked(family, rho, distances(i, j));
    }
  }
  return out;
}

SplineBasisSpec SplineBasisSpec::from_df(int df, int penalty_order) {
  SplineBasisSpec spec{df + penalty_order, 3, penalty_order};
  spec.validate();
  return spec;
}

void SplineBasisSpec::validate() const {
  if (degree < 0) throw DomainError("spline degree must be nonnegative");
  if (K < degree + 1) {
    throw DomainError("spline needs K >= degree + 1 (K=" + std::to_string(K) +
                      ", degree=" + std::to_string(degree) + ")");
  }
  if (penalty_order < 0 || penalty_order >= K) {
    throw DomainError("penalty order must lie in [0, K)");
  }
}

SplineDomain SplineDomain::covering(std::span<const double> values) {
  if (values.empty()) throw DomainError("cannot build a spline domain from no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double width = *hi - *lo;
  return {*lo - 0.01 * width, *hi + 0.01 * width};
}

double min_pairwise_distance(std::span<const Point> points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::min(best, distance(points[i], points[j]));
  }
  return best;
}

namespace {

std::vector<Point> distinct_points(std::span<const Point> points) {
  std::set<std::pair<double, double>> seen;
  std::vector<Point> out;
  out.reserve(points.size());
  for (const Point& p : points) {
    if (seen.emplace(p.x, p.y).second) out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<Point> knot_candidates(std::span<const Point> points, std::uint64_t seed,
                                   std::size_t max_candidates) {
  std::vector<Point> pool = distinct_points(points);
  if (pool.size() <= max_candidates) return pool;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates, then restore input order for readability of outputs.
  std::vector<std::size_t> index(pool.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  for (std::size_t i = 0; i < max_candidates; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
    std::swap(index[i], index[pick(rng)]);
  }
  index.resize(max_candidates);
  std::sort(index.begin(), index.end());
  std::vector<Point> out;
  out.reserve(max_candidates);
  for (std::size_t i : index) out.push_back(pool[i]);
  return out;
}

KnotSet select_knots(std::span<const Point> candidates, int S, std::uint64_t seed) {
  const std::vector<Point> pool = distinct_points(candidates);
  if (S < 1) throw DomainError("knot count must be at least 1");
  if (static_cast<std::size_t>(S) > pool.size()) {
    throw DomainError("requested " + std::to_string(S) + " knots from only " + std::to_string(pool.size()) +
                      " distinct candidates");
  }
  const std::size_t C = pool.size();
  std::vector<char> chosen(C, 0);
  std::vector<std::size_t> selected;
  selected.reserve(S);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, C - 1);
  std::vector<double> nearest(C, std::numeric_limits<double>::infinity());
  auto add = [&](std::size_t c) {
    chosen[c] = 1;
    selected.push_back(c);
    for (std::size_t k = 0; k < C; ++k) nearest[k] = std::min(nearest[k], distance(pool[k], pool[c]));
  };
  add(first(rng));
  while (selected.size() < static_cast<std::size_t>(S)) {
    std::size_t best = C;
    double best_d = -1.0;
    for (std::size_t k = 0; k < C; ++k) {
      if (!chosen[k] && nearest[k] > best_d) {
        best_d = nearest[k];
        best = k;
      }
    }
    add(best);
  }

  // Swap phase. Only an endpoint of the closest pair can raise the minimum.
  auto closest_pair = [&](std::size_t skip, std::size_t& a, std::size_t& b) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (i == skip) continue;
      for (std::size_t j = i + 1; j < selected.size(); ++j) {
        if (j == skip) continue;
        const double d = distance(pool[selected[i]], pool[selected[j]]);
        if (d < best) {
          best = d;
          a = i;
          b = j;
        }
      }
    }
    return best;
  };

  const std::size_t none = selected.size();
  const int max_swaps = 50 * S;
  for (int iter = 0; iter < max_swaps && selected.size() > 1 && C > selected.size(); ++iter) {
    std::size_t a = 0;
    std::size_t b = 0;
    const double current = closest_pair(none, a, b);
    bool improved = false;
    for (std::size_t slot : {a, b}) {
      std::size_t pa = 0;
      std::size_t pb = 0;
      const double others = closest_pair(slot, pa, pb);
      std::size_t best_c = C;
      double best_new = current;
      for (std::size_t c = 0; c < C; ++c) {
        if (chosen[c]) continue;
        double dc = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < selected.size() && dc > best_new; ++i) {
          if (i != slot) dc = std::min(dc, distance(pool[c], pool[selected[i]]));
        }
        const double candidate_min = std::min(others, dc);
        if (candidate_min > best_new + 1e-12) {
          best_new = candidate_min;
          best_c = c;
        }
      }
      if (best_c != C) {
        chosen[selected[slot]] = 0;
        chosen[best_c] = 1;
        selected[slot] = best_c;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }

  KnotSet out;
  out.selection_seed = seed;
  out.knots.reserve(S);
  for (std::size_t c : selected) out.knots.push_back(pool[c]);
  return out;
}

Eigen::MatrixXd distance_matrix(std::span<const Point> points, std::span<const Point> knots) {
  Eigen::MatrixXd d(points.size(), knots.size());
  for (std::size_t s = 0; s < knots.size(); ++s) {
    for (std::size_t l = 0; l < points.size(); ++l) d(l, s) = distance(points[l], knots[s]);
  }
  return d;
}

Eigen::MatrixXd spatial_basis(std::span<const Point> points, const KnotSet& knots, double rho,
                              CorrelationFamily family) {
  return correlation_matrix(family, rho, distance_matrix(points, knots.knots));
}

Eigen::MatrixXd knot_precision(const KnotSet& knots, double rho, CorrelationFamily family) {
  Eigen::MatrixXd omega = spatial_basis(knots.knots, knots, rho, family);
  // Distances are symmetric, but force exact symmetry of the floating-point result.
  for (Eigen::Index i = 0; i < omega.rows(); ++i) {
    omega(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < omega.cols(); ++j) omega(j, i) = omega(i, j);
  }
  return omega;
}

Eigen::LLT<Eigen::MatrixXd> factor_knot_precision(const Eigen::MatrixXd& omega, double nugget) {
  Eigen::MatrixXd shifted = omega;
  shifted.diagonal().array() += nugget;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success) {
    const double smallest = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(shifted, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .minCoeff();
    throw NumericalError("knot correlation matrix is not positive definite after nugget " +
                         std::to_string(nugget) + "; smallest eigenvalue " + std::to_string(smallest));
  }
  return llt;
}

Eigen::MatrixXd bspline_basis(std::span<const double> values, const SplineBasisSpec& spec,
                              const SplineDomain& domain, int* clamped) {
  spec.validate();
  if (!(domain.hi > domain.lo)) throw DomainError("degenerate spline domain");
  const int K = spec.K;
  const int p = spec.degree;
  const int interior = K - p - 1;

  std::vector<double> t(K + p + 1);
  for (int i = 0; i <= p; ++i) {
    t[i] = domain.lo;
    t[K + i] = domain.hi;
  }
  for (int j = 1; j <= interior; ++j) {
    t[p + j] = domain.lo + (domain.hi - domain.lo) * j / (interior + 1);
  }

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(values.size(), K);
  std::vector<double> N(p + 1), left(p + 1), right(p + 1);
  int n_clamped = 0;
  for (std::size_t row = 0; row < values.size(); ++row) {
    double x = values[row];
    if (x < domain.lo || x > domain.hi) {
      ++n_clamped;
      x = std::clamp(x, domain.lo, domain.hi);
    }
    int span = K - 1;
    if (x < t[K]) {
      span = static_cast<int>(std::upper_bound(t.begin() + p, t.begin() + K, x) - t.begin()) - 1;
    }
    N[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = x - t[span + 1 - j];
      right[j] = t[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double temp = N[r] / (right[r + 1] + left[j - r]);
        N[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      N[j] = saved;
    }
    for (int r = 0; r <= p; ++r) B(row, span - p + r) = N[r];
  }
  if (clamped) *clamped = n_clamped;
  return B;
}

Eigen::MatrixXd difference_penalty(int K, int order) {
  if (order < 0 || order >= K) throw DomainError("difference order must lie in [0, K)");
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(K, K);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index rows = D.rows() - 1;
    D = (D.bottomRows(rows) - D.topRows(rows)).eval();
  }
  return D.transpose() * D;
}

}  // namespace geodisagg
