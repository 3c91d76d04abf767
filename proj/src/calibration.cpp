#include <crowdloc/calibration.hpp>
#include <crowdloc/hvip.hpp>
#include <crowdloc/nelder_mead.hpp>

#include <Eigen/SVD>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>


namespace crowdloc {

  namespace {

    // Loss charged to an observation whose ankle ray misses the plane.
    constexpr auto invalid_penalty = 1e3;

    // Losses below this are never treated as outliers, so that exact data
    // is not thinned by reweighting against a near-zero median.
    constexpr auto reweight_floor = 1e-3;

    struct Parameters
    {
      CameraIntrinsicsd camera;
      GroundPlaned ground;
    };

    auto unpack(const Eigen::VectorXd& x, const Pixeld& center) -> Parameters
    {
      return {{std::exp(x(0)), center.x(), center.y()},
              GroundPlaned{normal_from_angles(x(1), x(2)), std::exp(x(3))}};
    }

    auto pack(const Parameters& p) -> Eigen::VectorXd
    {
      const auto& N = p.ground.normal();
      auto x = Eigen::VectorXd{4};
      x << std::log(p.camera.f), std::acos(std::clamp(N.z(), -1., 1.)),
          std::atan2(N.y(), N.x()), std::log(p.ground.offset());
      return x;
    }

    auto safe_loss(const StandingObservation& obs, const CameraIntrinsicsd& K,
                   const GroundPlaned& G, double h, const LossWeights& w)
        -> double
    {
      try
      {
        const auto loss = observation_loss(obs, K, G, h, w);
        return std::isfinite(loss) ? loss : invalid_penalty;
      }
      catch (const Error&)
      {
        return invalid_penalty;
      }
    }

    auto weighted_loss(std::span<const StandingObservation> obs,
                       std::span<const double> weights,
                       const CameraIntrinsicsd& K, const GroundPlaned& G,
                       const CalibrationOptions& options) -> double
    {
      auto total = 0.;
      auto weight_sum = 0.;
      for (auto i = std::size_t{0}; i < obs.size(); ++i)
      {
        if (weights[i] == 0)
          continue;
        total += weights[i] *
                 safe_loss(obs[i], K, G, options.height_prior, options.weights);
        weight_sum += weights[i];
      }
      return total / weight_sum;
    }

    // Least-squares common point of the ankle-to-shoulder image lines: the
    // vanishing point of the vertical direction.
    auto vertical_vanishing_point(std::span<const StandingObservation> obs)
        -> Eigen::Vector3d
    {
      auto A = Eigen::MatrixXd{Eigen::Index(obs.size()), 3};
      for (auto i = std::size_t{0}; i < obs.size(); ++i)
      {
        const Eigen::Vector3d a = obs[i].p_a.homogeneous();
        const Eigen::Vector3d s = obs[i].p_s.homogeneous();
        Eigen::Vector3d line = a.cross(s);
        line /= line.head<2>().norm();
        A.row(Eigen::Index(i)) = line.transpose();
      }
      const auto svd = Eigen::JacobiSVD<Eigen::MatrixXd>{A, Eigen::ComputeFullV};
      return svd.matrixV().col(2);
    }

    auto initial_guess(std::span<const StandingObservation> obs,
                       const Eigen::Vector3d& vp, double focal,
                       const Pixeld& center) -> std::optional<Parameters>
    {
      const auto K = CameraIntrinsicsd{focal, center.x(), center.y()};
      Point3d N = K.matrix().inverse() * vp;
      N.normalize();

      // Orient N so that ankle rays hit the plane in front of the camera:
      // the lowest ankle ray must point against the normal.
      const auto lowest = std::max_element(
          obs.begin(), obs.end(),
          [](const auto& a, const auto& b) { return a.p_a.y() < b.p_a.y(); });
      const Point3d ray = K.ray(lowest->p_a);
      if (N.dot(ray) > 0)
        N = -N;
      if (N.dot(ray) == 0)
        return std::nullopt;

      // Lowest ankle at 10 m depth.
      const auto D = -10. * N.dot(ray);
      return Parameters{K, GroundPlaned{N, D}};
    }

    // Smooth per-person residuals: signed angle (radians) from predicted to
    // observed segment, and signed relative length error. Their zero set is
    // the zero set of the calibration loss.
    auto signed_residuals(std::span<const StandingObservation> obs,
                          std::span<const double> weights,
                          const Parameters& p, const CalibrationOptions& options)
        -> Eigen::VectorXd
    {
      auto r = Eigen::VectorXd{Eigen::Index(2 * obs.size())};
      for (auto i = std::size_t{0}; i < obs.size(); ++i)
      {
        const Pixeld observed = obs[i].p_s - obs[i].p_a;
        auto angle = 10.;
        auto modulus = 10.;
        try
        {
          const Pixeld predicted =
              predict_shoulder(obs[i].p_a, p.camera, p.ground,
                               options.height_prior) -
              obs[i].p_a;
          const auto cross =
              predicted.x() * observed.y() - predicted.y() * observed.x();
          angle = std::atan2(cross, predicted.dot(observed));
          modulus = (predicted.norm() - observed.norm()) / observed.norm();
        }
        catch (const Error&)
        {
        }
        const auto w = std::sqrt(weights[i]);
        r(Eigen::Index(2 * i)) = w * std::sqrt(options.weights.angle) * angle;
        r(Eigen::Index(2 * i + 1)) =
            w * std::sqrt(options.weights.modulus) * modulus;
      }
      return r;
    }

    struct ResidualFunctor : Eigen::DenseFunctor<double>
    {
      ResidualFunctor(std::span<const StandingObservation> obs,
                      std::span<const double> weights, const Pixeld& center,
                      const CalibrationOptions& options)
        : Eigen::DenseFunctor<double>(4, int(2 * obs.size()))
        , obs{obs}
        , weights{weights}
        , center{center}
        , options{options}
      {
      }

      auto operator()(const InputType& x, ValueType& r) const -> int
      {
        r = signed_residuals(obs, weights, unpack(x, center), options);
        return 0;
      }

      std::span<const StandingObservation> obs;
      std::span<const double> weights;
      Pixeld center;
      const CalibrationOptions& options;
    };

    // Levenberg-Marquardt on the signed residuals with forward-difference
    // Jacobians.
    auto least_squares(std::span<const StandingObservation> obs,
                       std::span<const double> weights, Eigen::VectorXd x,
                       const Pixeld& center, const CalibrationOptions& options)
        -> std::pair<Eigen::VectorXd, int>
    {
      auto functor = Eigen::NumericalDiff<ResidualFunctor>{
          ResidualFunctor{obs, weights, center, options}};
      auto lm = Eigen::LevenbergMarquardt<Eigen::NumericalDiff<ResidualFunctor>>{
          functor};
      lm.setXtol(1e-15);
      lm.setFtol(1e-15);
      lm.setMaxfev(400);
      lm.minimize(x);
      return {x, int(lm.nfev())};
    }

    // Rank test on the Jacobian of the signed residuals.
    auto is_degenerate(std::span<const StandingObservation> obs,
                       std::span<const double> weights,
                       const Eigen::VectorXd& x, const Pixeld& center,
                       const CalibrationOptions& options) -> bool
    {
      constexpr auto step = 1e-6;
      auto J = Eigen::MatrixXd{Eigen::Index(2 * obs.size()), x.size()};
      for (auto j = Eigen::Index{0}; j < x.size(); ++j)
      {
        Eigen::VectorXd plus = x, minus = x;
        plus(j) += step;
        minus(j) -= step;
        J.col(j) =
            (signed_residuals(obs, weights, unpack(plus, center), options) -
             signed_residuals(obs, weights, unpack(minus, center), options)) /
            (2 * step);
      }
      const auto sv = Eigen::JacobiSVD<Eigen::MatrixXd>{J}.singularValues();
      return !(sv(sv.size() - 1) > 1e-6 * sv(0));
    }

  }  // namespace

  auto normal_from_angles(double polar, double azimuth) -> Point3d
  {
    return {std::sin(polar) * std::cos(azimuth),
            std::sin(polar) * std::sin(azimuth), std::cos(polar)};
  }

  auto select_standing(std::span<const KeypointSet> people, double tau)
      -> std::vector<StandingObservation>
  {
    auto selected = std::vector<StandingObservation>{};
    for (auto i = std::size_t{0}; i < people.size(); ++i)
    {
      const auto& k = people[i];
      const auto confidences = {
          at(k, Joint::LeftAnkle).confidence,
          at(k, Joint::RightAnkle).confidence,
          at(k, Joint::LeftShoulder).confidence,
          at(k, Joint::RightShoulder).confidence};
      if (std::min(confidences) < tau)
        continue;

      const Pixeld p_a = midpoint(k, Joint::LeftAnkle, Joint::RightAnkle);
      const Pixeld p_s = midpoint(k, Joint::LeftShoulder, Joint::RightShoulder);
      const Pixeld segment = p_s - p_a;
      const auto length = segment.norm();
      if (!(length > 0) || !(p_a.y() > p_s.y()))
        continue;
      if (std::abs(segment.x()) > 0.2 * std::abs(segment.y()))
        continue;
      const auto feet_gap = std::abs(at(k, Joint::LeftAnkle).p.y() -
                                     at(k, Joint::RightAnkle).p.y());
      if (feet_gap > 0.1 * length)
        continue;

      selected.push_back({p_a, p_s, std::min(confidences), int(i)});
    }
    return selected;
  }

  auto predict_shoulder(const Pixeld& p_a, const CameraIntrinsicsd& K,
                        const GroundPlaned& G, double h) -> Pixeld
  {
    try
    {
      const Point3d P_a = ground_intersect(p_a, K, G);
      const Point3d P_s = P_a + h * G.normal();
      return project(P_s, K);
    }
    catch (const Error& e)
    {
      throw Error{ErrorCode::ObservationInvalid, e.what()};
    }
  }

  auto observation_loss(const StandingObservation& obs,
                        const CameraIntrinsicsd& K, const GroundPlaned& G,
                        double h, const LossWeights& weights) -> double
  {
    const Pixeld observed = obs.p_s - obs.p_a;
    const auto observed_length = observed.norm();
    if (!(observed_length > 0))
      throw Error{ErrorCode::ObservationInvalid,
                  "zero-length ankle-to-shoulder segment"};
    const Pixeld predicted = predict_shoulder(obs.p_a, K, G, h) - obs.p_a;
    const auto predicted_length = predicted.norm();
    // A zero predicted segment has no direction; count it as orthogonal.
    const auto angle =
        predicted_length > 0 ? cosine_distance(predicted, observed) : 1.;
    const auto modulus =
        std::abs(predicted_length - observed_length) / observed_length;
    return weights.angle * angle + weights.modulus * modulus;
  }

  auto calibration_loss(const CameraIntrinsicsd& K, const GroundPlaned& G,
                        std::span<const StandingObservation> observations,
                        double h, const LossWeights& weights) -> double
  {
    if (observations.empty())
      throw Error{ErrorCode::InsufficientData, "no observations"};
    auto total = 0.;
    for (const auto& obs : observations)
      total += observation_loss(obs, K, G, h, weights);
    return total / double(observations.size());
  }

  auto calibrate(std::span<const StandingObservation> observations,
                 int image_width, int image_height,
                 const CalibrationOptions& options) -> CalibrationResult
  {
    if (observations.size() < 3)
      throw Error{ErrorCode::InsufficientData,
                  "calibration needs at least 3 standing people, got " +
                      std::to_string(observations.size())};
    for (const auto& obs : observations)
      if (!((obs.p_s - obs.p_a).norm() > 0))
        throw Error{ErrorCode::ObservationInvalid,
                    "zero-length ankle-to-shoulder segment"};

    const auto center = Pixeld{0.5 * image_width, 0.5 * image_height};
    auto weights = std::vector<double>(observations.size(), 1.);
    const auto vp = vertical_vanishing_point(observations);
    const auto nm_options = NelderMeadOptions{
        options.tolerance, options.tolerance, options.max_evaluations};

    auto steps = Eigen::VectorXd{4};
    steps << 0.3, 0.05, 0.05, 0.3;
    auto evaluations = 0;
    auto converged = false;

    // Least squares on the smooth residuals, then simplex runs on the loss
    // itself, restarted from their own optimum until they stop improving.
    auto refine = [&](Eigen::VectorXd x) {
      auto lm_evaluations = 0;
      std::tie(x, lm_evaluations) =
          least_squares(observations, weights, x, center, options);
      evaluations += lm_evaluations;
      auto objective = [&](const Eigen::VectorXd& y) {
        const auto p = unpack(y, center);
        return weighted_loss(observations, weights, p.camera, p.ground,
                             options);
      };
      auto value = std::numeric_limits<double>::infinity();
      auto local_steps = steps;
      for (int restart = 0; restart < 8; ++restart)
      {
        const auto result = nelder_mead(objective, x, local_steps, nm_options);
        evaluations += result.evaluations;
        const auto improved = result.value < value - options.tolerance;
        x = result.x;
        value = result.value;
        converged = result.converged;
        if (!improved && restart > 0)
          break;
        local_steps *= 0.5;
      }
      return std::pair{x, value};
    };

    auto best_x = Eigen::VectorXd{};
    auto best_value = std::numeric_limits<double>::infinity();
    for (const auto multiplier : options.focal_multipliers)
    {
      const auto guess =
          initial_guess(observations, vp, multiplier * image_width, center);
      if (!guess)
        continue;
      const auto [x, value] = refine(pack(*guess));
      if (value < best_value)
      {
        best_x = x;
        best_value = value;
      }
    }
    if (best_x.size() == 0)
      throw Error{ErrorCode::InsufficientData,
                  "no valid initialization for the ground plane"};

    auto per_observation = [&](const Eigen::VectorXd& x) {
      const auto p = unpack(x, center);
      auto losses = std::vector<double>{};
      for (const auto& obs : observations)
        losses.push_back(safe_loss(obs, p.camera, p.ground,
                                   options.height_prior, options.weights));
      return losses;
    };

    if (options.reweight)
    {
      const auto losses = per_observation(best_x);
      auto sorted = losses;
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                       sorted.end());
      const auto threshold = 3 * sorted[sorted.size() / 2];
      auto dropped = 0;
      for (auto i = std::size_t{0}; i < losses.size(); ++i)
        if (losses[i] > threshold && losses[i] > reweight_floor)
        {
          weights[i] = 0;
          ++dropped;
        }
      if (observations.size() - dropped >= 3 && dropped > 0)
        std::tie(best_x, best_value) = refine(best_x);
      else
        std::fill(weights.begin(), weights.end(), 1.);
    }

    const auto p = unpack(best_x, center);
    auto result = CalibrationResult{};
    result.camera = p.camera;
    result.ankle_plane = p.ground;
    result.ground = offset_plane(p.ground, -options.ground_shift);
    result.residual = best_value;
    result.iterations = evaluations;
    result.per_observation = per_observation(best_x);
    result.weights = weights;
    result.observations_used =
        int(std::count_if(weights.begin(), weights.end(),
                          [](double w) { return w > 0; }));
    result.converged = converged;
    result.degenerate_configuration =
        is_degenerate(observations, weights, best_x, center, options);
    return result;
  }

}  // namespace crowdloc
