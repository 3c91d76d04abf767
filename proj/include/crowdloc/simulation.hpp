#pragma once

#include <crowdloc/cropping.hpp>
#include <crowdloc/hvip.hpp>
#include <crowdloc/skeleton.hpp>

#include <cstdint>
#include <optional>
#include <vector>


namespace crowdloc {

  struct SceneSpec
  {
    std::uint64_t seed = 1;
    int image_width = 3840;
    int image_height = 2160;
    CameraIntrinsicsd camera{2700., 1920., 1080.};
    //! Floor plane; HVIPs lie on it.
    GroundPlaned ground{Point3d{0., -0.9659258262890683, -0.25881904510252074},
                        12.};
    int person_count = 100;
    //! Range of camera-frame depth of the floor contact point.
    double depth_min = 15;
    double depth_max = 120;
    //! Stature range (meters).
    double height_min = 1.6;
    double height_max = 1.9;
    //! Ankle-midpoint to shoulder-midpoint length (meters).
    double torso_length = 1.4;
    //! Relative per-person spread of torso_length (uniform in ±jitter).
    double torso_length_jitter = 0;
    //! Height of the ankle keypoints above the floor (meters).
    double ankle_height = 0.1;
    double standing_fraction = 1;
    double max_tilt_deg = 60;
    double keypoint_noise = 0;

    auto validate() const -> void;
  };

  //! Plane for a camera at `height` meters pitched down by `pitch_deg` and
  //! rolled by `roll_deg` about the optical axis.
  auto ground_from_pitch_roll(double pitch_deg, double roll_deg, double height)
      -> GroundPlaned;

  enum class Stance
  {
    Standing,
    Tilted,
  };

  struct SimPerson
  {
    int id;
    Stance stance;
    double stature;
    double torso_length;
    //! Body axis (unit), equal to N for standing people.
    Point3d axis;
    std::array<Point3d, joint_count> joints;
    //! Ankle and shoulder midpoints.
    Point3d P_a;
    Point3d P_s;
    Point3d P_t;
    Point3d P_v;
    double d;
    //! Capsule samples in the camera frame.
    PointSetd body;
  };

  struct Scene
  {
    SceneSpec spec;
    std::vector<SimPerson> people;
  };

  //! Rejection-samples people uniformly over the visible floor within the
  //! depth range. Every emitted person projects fully inside the image.
  auto generate(const SceneSpec& spec) -> Scene;

  struct AnnotatedPerson
  {
    std::optional<int> id;
    Box box{};
    KeypointSet keypoints{};
    std::optional<Pixeld> torso;
    std::optional<Pixeld> hvip;
    std::optional<double> hvip_offset;
    //! Model-frame body points with the model torso center; replayed by
    //! localization for placement and penetration checks.
    std::optional<PointSetd> body_points;
    std::optional<Point3d> body_torso;
  };

  struct AnnotationSet
  {
    int image_width = 0;
    int image_height = 0;
    std::vector<AnnotatedPerson> people;
  };

  struct RenderOptions
  {
    double keypoint_noise = 0;
    bool noise_torso = false;
    bool noise_hvip = false;
    bool include_body = true;
  };

  //! Exact projections plus isotropic Gaussian pixel noise. Each person draws
  //! from its own Philox stream, so rendering order does not matter.
  auto render_annotations(const Scene& scene, const RenderOptions& options)
      -> AnnotationSet;

  //! Slope of the least-squares line of box height against box bottom row.
  auto pyramid_slope(std::span<const Box> boxes) -> double;

}  // namespace crowdloc
