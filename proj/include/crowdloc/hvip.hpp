#pragma once

#include <crowdloc/cropping.hpp>
#include <crowdloc/geometry.hpp>

#include <algorithm>
#include <optional>
#include <span>
#include <vector>


namespace crowdloc {

  template <typename T>
  using PointSet = Eigen::Matrix<T, 3, Eigen::Dynamic>;

  using PointSetd = PointSet<double>;

  //! 2D evidence for one person inside one patch. The HVIP is given either
  //! as a signed 1D offset from the torso pixel along the ground-normal image
  //! direction, or as a patch-local pixel.
  struct PersonObservation
  {
    int patch_id = -1;
    Pixeld p_t_local = Pixeld::Zero();
    std::optional<double> hvip_offset;
    std::optional<Pixeld> p_v_local;
    Point3d delta_t = Point3d::Zero();
    std::optional<Pixeld> body_center;

    auto validate() const -> void
    {
      if (hvip_offset.has_value() == p_v_local.has_value())
        throw Error{ErrorCode::ObservationInvalid,
                    "exactly one of hvip offset and hvip pixel is required"};
      if (!p_t_local.allFinite() || !delta_t.allFinite() ||
          (hvip_offset && !std::isfinite(*hvip_offset)) ||
          (p_v_local && !p_v_local->allFinite()))
        throw Error{ErrorCode::ObservationInvalid, "non-finite observation"};
    }
  };

  struct LocatedPerson
  {
    std::optional<int> id;
    int patch_id = -1;
    //! Global torso and HVIP pixels.
    Pixeld p_t = Pixeld::Zero();
    Pixeld p_v = Pixeld::Zero();
    Point3d P_v = Point3d::Zero();
    Point3d P_t = Point3d::Zero();
    //! Torso height above the ground plane (meters).
    double d = 0;
    //! Pixel scale used to size duplicate matching; falls back to |p_t - p_v|.
    std::optional<double> scale_px;
    std::optional<PointSetd> body_points;
    std::optional<double> ground_normal_loss;
    std::optional<double> out_of_bound_loss;
  };

  template <typename T>
  struct HvipResolution
  {
    Pixel<T> p_t;
    Pixel<T> p_v;
    //! Unit image direction in which the ground lies below the torso pixel.
    Pixel<T> direction;
    //! Perpendicular distance of p_v from the line through p_t (pixels).
    T collinearity_deviation;
  };

  //! Image direction of -N at pixel p, i.e. the derivative of the projection
  //! of P - tN. Written as w p - (a, b) with KN = (a, b, w), so it covers both
  //! finite and infinite vanishing points.
  template <typename T>
  auto downward_direction(const Pixel<T>& p, const CameraIntrinsics<T>& K,
                          const Point3<T>& N) -> Pixel<T>
  {
    const HomogeneousPixel<T> vp = vanishing_point(K, N);
    const Pixel<T> direction = vp.z() * p - vp.template head<2>();
    const T norm = direction.norm();
    if (!(norm > T(1e-12) * std::max(T(1), vp.norm())))
      throw Error{ErrorCode::DirectionUndefined,
                  "torso pixel coincides with the vanishing point"};
    return direction / norm;
  }

  template <typename T>
  auto resolve_hvip_pixel(const PersonObservation& obs, const Patch& patch,
                          const CameraIntrinsics<T>& K, const Point3<T>& N)
      -> HvipResolution<T>
  {
    obs.validate();
    const Pixel<T> t_crop = patch.t_crop().template cast<T>();
    const Pixel<T> p_t = obs.p_t_local.template cast<T>() + t_crop;
    const Pixel<T> direction = downward_direction(p_t, K, N);

    if (obs.hvip_offset)
      return {p_t, p_t + T(*obs.hvip_offset) * direction, direction, T(0)};

    const Pixel<T> p_v = obs.p_v_local->template cast<T>() + t_crop;
    const Pixel<T> r = p_v - p_t;
    using std::abs;
    const T deviation =
        abs(r.x() * direction.y() - r.y() * direction.x());
    return {p_t, p_v, direction, deviation};
  }

  //! Torso height from the HVIP ground point and the torso pixel row.
  template <typename T>
  auto torso_height(const Point3<T>& P_v, T v_t, const CameraIntrinsics<T>& K,
                    const Point3<T>& N) -> T
  {
    using std::abs;
    const T dv = v_t - K.cy;
    const T denominator = dv * N.z() - K.f * N.y();
    if (abs(denominator) < T(1e-12))
      throw Error{ErrorCode::DegenerateRay,
                  "torso ray parallel to the normal/optical-axis plane"};
    return (K.f * P_v.y() - dv * P_v.z()) / denominator;
  }

  //! Lifts global torso and HVIP pixels to 3D: P_v on the plane, then
  //! P_t = P_v + d N + δt.
  template <typename T>
  auto locate_pixels(const Pixel<T>& p_t, const Pixel<T>& p_v,
                     const CameraIntrinsics<T>& K, const GroundPlane<T>& G,
                     const Point3<T>& delta_t = Point3<T>::Zero())
      -> LocatedPerson
  {
    const Point3<T> P_v = ground_intersect(p_v, K, G);
    const T d = torso_height(P_v, p_t.y(), K, G.normal());
    auto person = LocatedPerson{};
    person.p_t = p_t.template cast<double>();
    person.p_v = p_v.template cast<double>();
    person.P_v = P_v.template cast<double>();
    person.d = double(d);
    person.P_t = (P_v + d * G.normal() + delta_t).template cast<double>();
    return person;
  }

  template <typename T>
  auto locate(const PersonObservation& obs, const Patch& patch,
              const CameraIntrinsics<T>& K, const GroundPlane<T>& G)
      -> LocatedPerson
  {
    const auto resolved = resolve_hvip_pixel(obs, patch, K, G.normal());
    auto person = locate_pixels(resolved.p_t, resolved.p_v, K, G,
                                Point3<T>(obs.delta_t.template cast<T>()));
    person.patch_id = patch.id;
    return person;
  }

  //! Rigid placement of a model-frame point set: M - P_t,model + P_t.
  template <typename T>
  auto place_body(const PointSet<T>& body, const Point3<T>& torso_model,
                  const Point3<T>& P_t) -> PointSet<T>
  {
    return body.colwise() + (P_t - torso_model);
  }

  //! Cosine distance 1 - a·b / (|a||b|).
  //! Clamped to [0, 2] against rounding.
  template <typename DerivedA, typename DerivedB>
  auto cosine_distance(const Eigen::MatrixBase<DerivedA>& a,
                       const Eigen::MatrixBase<DerivedB>& b)
  {
    using T = typename DerivedA::Scalar;
    const T c = a.dot(b) / (a.norm() * b.norm());
    return T(1) - std::clamp(c, T(-1), T(1));
  }

  //! 1 - cos of the angle between the craniocaudal axis P_s - P_a and N.
  template <typename T>
  auto ground_normal_loss(const Point3<T>& P_s, const Point3<T>& P_a,
                          const Point3<T>& N) -> T
  {
    const Point3<T> axis = P_s - P_a;
    if (!(axis.norm() > T(0)))
      throw Error{ErrorCode::ObservationInvalid,
                  "coincident shoulder and ankle points"};
    return cosine_distance(axis, N);
  }

  //! Depth of the deepest point below the plane; zero without penetration.
  template <typename T>
  auto out_of_bound_loss(const PointSet<T>& points, const GroundPlane<T>& G)
      -> T
  {
    if (points.cols() == 0)
      throw Error{ErrorCode::ObservationInvalid, "empty point set"};
    const Eigen::Matrix<T, 1, Eigen::Dynamic> distances =
        (G.normal().transpose() * points).array() + G.offset();
    const T deepest = distances.minCoeff();
    using std::abs;
    return deepest < T(0) ? abs(deepest) : T(0);
  }

  //! Network-style camera conditioning for one patch.
  struct ConditioningInput
  {
    double f_norm;
    Pixeld shift;
  };

  template <typename T>
  auto conditioning(const CameraIntrinsics<T>& K, const Patch& patch,
                    T scene_width) -> ConditioningInput
  {
    if (patch.size <= 0)
      throw Error{ErrorCode::ObservationInvalid, "patch size must be positive"};
    const Pixeld center = patch.center();
    const auto c = double(patch.size);
    return {double(K.f / scene_width),
            {(center.x() - double(K.cx)) / c, (center.y() - double(K.cy)) / c}};
  }

  //! 3D shoulder/ankle proxies from their pixels: both rays are cut with the
  //! vertical plane through P_t facing the camera (spanned by N and the
  //! horizontal direction perpendicular to the line of sight).
  template <typename T>
  auto body_plane_proxy(const Pixel<T>& p, const Point3<T>& P_t,
                        const CameraIntrinsics<T>& K, const Point3<T>& N)
      -> Point3<T>
  {
    const Point3<T> sight = P_t - N * N.dot(P_t);
    const T sight_norm = sight.norm();
    if (!(sight_norm > T(0)))
      throw Error{ErrorCode::DegenerateRay, "line of sight along the normal"};
    const Point3<T> plane_normal = sight / sight_norm;
    const Point3<T> ray = K.ray(p);
    const T denominator = plane_normal.dot(ray);
    using std::abs;
    if (abs(denominator) < T(1e-12))
      throw Error{ErrorCode::NoIntersection, "ray parallel to body plane"};
    const T depth = plane_normal.dot(P_t) / denominator;
    if (!(depth > T(0)))
      throw Error{ErrorCode::BehindCamera, "body plane behind the camera"};
    return depth * ray;
  }

}  // namespace crowdloc
