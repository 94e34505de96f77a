#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "geodisagg/geometry.hpp"
#include "geodisagg/model.hpp"

namespace geodisagg::testing {

inline GridCell cell(int id, double x, double y, double population = 1.0, std::vector<double> covariates = {}) {
  return GridCell{id, Point{x, y}, population, std::move(covariates)};
}

/// `side` x `side` unit cells tiled into square areas of `tile` cells, with a
/// smooth covariate "x1", varying population and Poisson-ish counts.
inline std::shared_ptr<const DisaggregationProblem> tiled_problem(int side, int tile, std::uint64_t seed,
                                                                  bool with_covariate = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  std::vector<GridCell> cells;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      std::vector<double> cov;
      if (with_covariate) cov.push_back(std::sin(0.4 * x) + std::cos(0.3 * y));
      cells.push_back(cell(y * side + x, x + 0.5, y + 0.5, unif(rng), cov));
    }
  const int per = side / tile;
  std::vector<AreaMembership> members;
  std::vector<Area> areas;
  for (int ay = 0; ay < per; ++ay)
    for (int ax = 0; ax < per; ++ax) {
      const int id = ay * per + ax;
      areas.push_back(Area{id, 0});
      for (int dy = 0; dy < tile; ++dy)
        for (int dx = 0; dx < tile; ++dx) {
          const int c = (ay * tile + dy) * side + ax * tile + dx;
          members.push_back(AreaMembership{id, c, 1.0});
        }
    }
  std::poisson_distribution<int> pois(3.0 * tile * tile);
  for (Area& a : areas) a.count = pois(rng);
  std::vector<std::string> names;
  if (with_covariate) names.push_back("x1");
  return std::make_shared<const DisaggregationProblem>(names, cells, members, areas);
}

/// Random standard-normal parameter vector scaled by `scale`.
inline Eigen::VectorXd random_vector(int size, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace geodisagg::testing
