#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <vector>


namespace crowdloc {

  struct NelderMeadOptions
  {
    double function_tolerance = 1e-10;
    double parameter_tolerance = 1e-10;
    int max_evaluations = 10'000;
  };

  struct NelderMeadResult
  {
    Eigen::VectorXd x;
    double value;
    int evaluations;
    bool converged;
  };

  //! Downhill simplex with the standard reflection/expansion/contraction/
  //! shrink coefficients (1, 2, 1/2, 1/2). `steps` sets the initial simplex.
  template <typename Function>
  auto nelder_mead(Function&& f, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& steps,
                   const NelderMeadOptions& options = {}) -> NelderMeadResult
  {
    const auto n = x0.size();
    auto simplex = std::vector<Eigen::VectorXd>(n + 1, x0);
    auto values = std::vector<double>(n + 1);
    auto evaluations = 0;
    auto eval = [&](const Eigen::VectorXd& x) {
      ++evaluations;
      return f(x);
    };

    for (auto i = Eigen::Index{0}; i < n; ++i)
      simplex[i + 1](i) += steps(i);
    for (auto i = Eigen::Index{0}; i <= n; ++i)
      values[i] = eval(simplex[i]);

    auto order = std::vector<Eigen::Index>(n + 1);
    auto converged = false;
    while (evaluations < options.max_evaluations)
    {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return values[a] < values[b];
      });
      const auto best = order.front();
      const auto worst = order.back();
      const auto second_worst = order[n - 1];

      auto spread = 0.;
      for (auto i = Eigen::Index{0}; i <= n; ++i)
        spread = std::max(spread,
                          (simplex[i] - simplex[best]).lpNorm<Eigen::Infinity>());
      if (values[worst] - values[best] <= options.function_tolerance &&
          spread <= options.parameter_tolerance)
      {
        converged = true;
        break;
      }

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (auto i = Eigen::Index{0}; i <= n; ++i)
        if (i != worst)
          centroid += simplex[i];
      centroid /= double(n);

      const Eigen::VectorXd reflected =
          centroid + (centroid - simplex[worst]);
      const auto f_reflected = eval(reflected);
      if (f_reflected < values[best])
      {
        const Eigen::VectorXd expanded =
            centroid + 2. * (centroid - simplex[worst]);
        const auto f_expanded = eval(expanded);
        if (f_expanded < f_reflected)
        {
          simplex[worst] = expanded;
          values[worst] = f_expanded;
        }
        else
        {
          simplex[worst] = reflected;
          values[worst] = f_reflected;
        }
        continue;
      }
      if (f_reflected < values[second_worst])
      {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
        continue;
      }

      const auto outside = f_reflected < values[worst];
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
      const auto f_contracted = eval(contracted);
      if (f_contracted < std::min(f_reflected, values[worst]))
      {
        simplex[worst] = contracted;
        values[worst] = f_contracted;
        continue;
      }

      for (auto i = Eigen::Index{0}; i <= n; ++i)
      {
        if (i == best)
          continue;
        simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
        values[i] = eval(simplex[i]);
      }
    }

    const auto best = std::distance(
        values.begin(), std::min_element(values.begin(), values.end()));
    return {simplex[best], values[best], evaluations, converged};
  }

}  // namespace crowdloc
