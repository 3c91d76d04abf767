#pragma once

#include <crowdloc/error.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>


// Camera frame convention used throughout: x right, y down, z forward.
namespace crowdloc {

  template <typename T>
  using Pixel = Eigen::Matrix<T, 2, 1>;

  template <typename T>
  using Point3 = Eigen::Matrix<T, 3, 1>;

  //! Homogeneous image point; a zero third component is a point at infinity.
  template <typename T>
  using HomogeneousPixel = Eigen::Matrix<T, 3, 1>;

  using Pixeld = Pixel<double>;
  using Point3d = Point3<double>;

  //! Square-pixel pinhole model.
  template <typename T>
  struct CameraIntrinsics
  {
    T f;
    T cx;
    T cy;

    auto matrix() const -> Eigen::Matrix<T, 3, 3>
    {
      auto K = Eigen::Matrix<T, 3, 3>{};
      K << f, 0, cx,  //
          0, f, cy,   //
          0, 0, 1;
      return K;
    }

    //! K^{-1} p̄, the viewing ray through a pixel (z component 1).
    auto ray(const Pixel<T>& p) const -> Point3<T>
    {
      return {(p.x() - cx) / f, (p.y() - cy) / f, T(1)};
    }

    auto principal_point() const -> Pixel<T>
    {
      return {cx, cy};
    }
  };

  using CameraIntrinsicsd = CameraIntrinsics<double>;

  //! Plane N·P + D = 0 with unit normal oriented toward the camera (D >= 0).
  template <typename T>
  class GroundPlane
  {
  public:
    GroundPlane() = default;

    //! Normalizes the normal and flips the sign so that the camera origin is
    //! on the positive side.
    GroundPlane(const Point3<T>& normal, T offset)
    {
      using std::abs;
      const T norm = normal.norm();
      if (!(norm > T(0)))
        throw Error{ErrorCode::ObservationInvalid, "zero ground normal"};
      _normal = normal / norm;
      _offset = offset / norm;
      if (_offset < T(0))
      {
        _normal = -_normal;
        _offset = -_offset;
      }
    }

    //! Builds a plane verbatim, without renormalizing or reorienting. Used for
    //! planes derived from an already normalized one (e.g. offset planes).
    static auto raw(const Point3<T>& unit_normal, T offset) -> GroundPlane
    {
      auto g = GroundPlane{};
      g._normal = unit_normal;
      g._offset = offset;
      return g;
    }

    auto normal() const -> const Point3<T>&
    {
      return _normal;
    }

    auto offset() const -> T
    {
      return _offset;
    }

    //! G = [Nᵀ, D]ᵀ.
    auto coefficients() const -> Eigen::Matrix<T, 4, 1>
    {
      auto g = Eigen::Matrix<T, 4, 1>{};
      g << _normal, _offset;
      return g;
    }

  private:
    Point3<T> _normal{T(0), T(-1), T(0)};
    T _offset{T(0)};
  };

  using GroundPlaned = GroundPlane<double>;

  //! Treat homogeneous pixels with |w| below this as points at infinity.
  inline constexpr double infinity_threshold = 1e-12;

  template <typename T>
  auto project(const Point3<T>& P, const CameraIntrinsics<T>& K) -> Pixel<T>
  {
    if (!(P.z() > T(0)))
      throw Error{ErrorCode::BehindCamera, "point has non-positive depth"};
    return {K.f * P.x() / P.z() + K.cx, K.f * P.y() / P.z() + K.cy};
  }

  //! Back-projects a pixel onto the plane: P = z K⁻¹p̄ with z = -D / (N·K⁻¹p̄).
  template <typename T>
  auto ground_intersect(const Pixel<T>& p, const CameraIntrinsics<T>& K,
                        const GroundPlane<T>& G) -> Point3<T>
  {
    using std::abs;
    const Point3<T> ray = K.ray(p);
    const T denominator = G.normal().dot(ray);
    if (abs(denominator) < T(infinity_threshold) * ray.norm())
      throw Error{ErrorCode::NoIntersection, "viewing ray parallel to plane"};
    const T depth = -G.offset() / denominator;
    if (!(depth > T(0)))
      throw Error{ErrorCode::BehindCamera,
                  "plane intersection lies behind the camera"};
    return depth * ray;
  }

  template <typename T>
  auto signed_distance(const Point3<T>& P, const GroundPlane<T>& G) -> T
  {
    return G.normal().dot(P) + G.offset();
  }

  //! Image of the direction N, i.e. KN. May be a point at infinity.
  template <typename T>
  auto vanishing_point(const CameraIntrinsics<T>& K, const Point3<T>& N)
      -> HomogeneousPixel<T>
  {
    return K.matrix() * N;
  }

  template <typename T>
  auto is_at_infinity(const HomogeneousPixel<T>& p) -> bool
  {
    using std::abs;
    return abs(p.z()) < T(infinity_threshold);
  }

  //! Shifts the plane by delta along its normal: points at signed distance
  //! delta from G lie on the result.
  template <typename T>
  auto offset_plane(const GroundPlane<T>& G, T delta) -> GroundPlane<T>
  {
    return GroundPlane<T>::raw(G.normal(), G.offset() - delta);
  }

  //! Orthogonal projection of P onto the plane.
  template <typename T>
  auto foot_on_plane(const Point3<T>& P, const GroundPlane<T>& G) -> Point3<T>
  {
    return P - signed_distance(P, G) * G.normal();
  }

}  // namespace crowdloc
