#include <crowdloc/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <limits>


namespace crowdloc {

  // Shortest augmenting path formulation with row/column potentials; rows are
  // assigned one at a time. Requires rows <= cols, so the matrix is
  // transposed when needed.
  auto assign(const Eigen::MatrixXd& cost, double gate) -> std::vector<int>
  {
    const auto rows = cost.rows();
    const auto cols = cost.cols();
    if (rows == 0 || cols == 0)
      return std::vector<int>(std::size_t(rows), -1);
    if (rows > cols)
    {
      const auto transposed = assign(cost.transpose(), gate);
      auto result = std::vector<int>(std::size_t(rows), -1);
      for (auto c = std::size_t{0}; c < transposed.size(); ++c)
        if (transposed[c] >= 0)
          result[std::size_t(transposed[c])] = int(c);
      return result;
    }

    // Gated entries become expensive but finite so that a full matching
    // always exists; they are dropped afterwards.
    auto largest = 0.;
    for (auto i = Eigen::Index{0}; i < rows; ++i)
      for (auto j = Eigen::Index{0}; j < cols; ++j)
        if (std::isfinite(cost(i, j)) && cost(i, j) <= gate)
          largest = std::max(largest, std::abs(cost(i, j)));
    const auto big = 1 + 2 * largest * double(rows + 1);
    auto c = [&](Eigen::Index i, Eigen::Index j) {
      const auto v = cost(i, j);
      return std::isfinite(v) && v <= gate ? v : big;
    };

    const auto inf = std::numeric_limits<double>::infinity();
    auto u = std::vector<double>(std::size_t(rows + 1), 0.);
    auto v = std::vector<double>(std::size_t(cols + 1), 0.);
    // p[j]: row (1-based) assigned to column j; way[j]: previous column.
    auto p = std::vector<Eigen::Index>(std::size_t(cols + 1), 0);
    auto way = std::vector<Eigen::Index>(std::size_t(cols + 1), 0);

    for (auto i = Eigen::Index{1}; i <= rows; ++i)
    {
      p[0] = i;
      auto j0 = Eigen::Index{0};
      auto minv = std::vector<double>(std::size_t(cols + 1), inf);
      auto used = std::vector<char>(std::size_t(cols + 1), 0);
      do
      {
        used[std::size_t(j0)] = 1;
        const auto i0 = p[std::size_t(j0)];
        auto delta = inf;
        auto j1 = Eigen::Index{0};
        for (auto j = Eigen::Index{1}; j <= cols; ++j)
        {
          if (used[std::size_t(j)])
            continue;
          const auto reduced = c(i0 - 1, j - 1) - u[std::size_t(i0)] -
                               v[std::size_t(j)];
          if (reduced < minv[std::size_t(j)])
          {
            minv[std::size_t(j)] = reduced;
            way[std::size_t(j)] = j0;
          }
          if (minv[std::size_t(j)] < delta)
          {
            delta = minv[std::size_t(j)];
            j1 = j;
          }
        }
        for (auto j = Eigen::Index{0}; j <= cols; ++j)
        {
          if (used[std::size_t(j)])
          {
            u[std::size_t(p[std::size_t(j)])] += delta;
            v[std::size_t(j)] -= delta;
          }
          else
            minv[std::size_t(j)] -= delta;
        }
        j0 = j1;
      } while (p[std::size_t(j0)] != 0);
      do
      {
        const auto j1 = way[std::size_t(j0)];
        p[std::size_t(j0)] = p[std::size_t(j1)];
        j0 = j1;
      } while (j0 != 0);
    }

    auto result = std::vector<int>(std::size_t(rows), -1);
    for (auto j = Eigen::Index{1}; j <= cols; ++j)
    {
      const auto i = p[std::size_t(j)];
      if (i == 0)
        continue;
      const auto value = cost(i - 1, j - 1);
      if (std::isfinite(value) && value <= gate)
        result[std::size_t(i - 1)] = int(j - 1);
    }
    return result;
  }

}  // namespace crowdloc
