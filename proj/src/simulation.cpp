#include <crowdloc/random.hpp>
#include <crowdloc/simulation.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>


namespace crowdloc {

  namespace {

    constexpr auto deg = std::numbers::pi / 180.;
    // Bodies float this far above the floor so that the penetration test is
    // not decided by rounding.
    constexpr auto floor_clearance = 1e-3;
    constexpr auto body_radius = 0.15;
    constexpr auto rejection_budget = 2000;
    constexpr auto image_margin = 1.;

    // Stream ids: 0 for scene layout, 1 + id for per-person rendering.
    constexpr std::uint64_t layout_stream = 0;

    struct JointTemplate
    {
      Joint joint;
      // Height above the ankles as a fraction of the torso length, or of the
      // head extent when `head` is set.
      double height;
      double lateral;
      bool head;
    };

    constexpr auto joint_templates = std::array<JointTemplate, joint_count>{{
        {Joint::Nose, 0.45, 0., true},
        {Joint::LeftEye, 0.55, 0.03, true},
        {Joint::RightEye, 0.55, -0.03, true},
        {Joint::LeftEar, 0.5, 0.07, true},
        {Joint::RightEar, 0.5, -0.07, true},
        {Joint::LeftShoulder, 1., 0.19, false},
        {Joint::RightShoulder, 1., -0.19, false},
        {Joint::LeftElbow, 0.72, 0.22, false},
        {Joint::RightElbow, 0.72, -0.22, false},
        {Joint::LeftWrist, 0.45, 0.24, false},
        {Joint::RightWrist, 0.45, -0.24, false},
        {Joint::LeftHip, 0.52, 0.1, false},
        {Joint::RightHip, 0.52, -0.1, false},
        {Joint::LeftKnee, 0.27, 0.1, false},
        {Joint::RightKnee, 0.27, -0.1, false},
        {Joint::LeftAnkle, 0., 0.1, false},
        {Joint::RightAnkle, 0., -0.1, false},
    }};

    auto any_perpendicular(const Point3d& v) -> Point3d
    {
      const Point3d seed = std::abs(v.x()) < 0.9 ? Point3d::UnitX()
                                                 : Point3d::UnitY();
      return v.cross(seed).normalized();
    }

    // 8 rings of 6 points plus the two poles.
    auto capsule(const Point3d& base, const Point3d& axis,
                 const Point3d& lateral, double length) -> PointSetd
    {
      const Point3d other = axis.cross(lateral);
      auto points = PointSetd{3, 50};
      auto k = 0;
      points.col(k++) = base;
      points.col(k++) = base + length * axis;
      for (int level = 0; level < 8; ++level)
      {
        const auto h = body_radius +
                       (length - 2 * body_radius) * level / 7.;
        for (int j = 0; j < 6; ++j)
        {
          const auto angle = 2 * std::numbers::pi * j / 6.;
          points.col(k++) = base + h * axis +
                            body_radius * (std::cos(angle) * lateral +
                                           std::sin(angle) * other);
        }
      }
      return points;
    }

    auto visible(const Point3d& P, const SceneSpec& spec) -> bool
    {
      if (!(P.z() > 0))
        return false;
      const auto p = project(P, spec.camera);
      return p.x() >= image_margin && p.x() <= spec.image_width - image_margin &&
             p.y() >= image_margin && p.y() <= spec.image_height - image_margin;
    }

    auto make_person(int id, const Point3d& floor_point, const Point3d& axis,
                     Stance stance, double stature, double torso_length,
                     const SceneSpec& spec) -> SimPerson
    {
      const auto& G = spec.ground;
      const auto& N = G.normal();
      // Left-right axis parallel to the image plane, so paired joints share
      // a depth and the midpoint of their projections is the projection of
      // their midpoint.
      Point3d lateral = axis.cross(Point3d::UnitZ());
      lateral = lateral.norm() > 0 ? lateral.normalized()
                                   : any_perpendicular(axis);

      auto base = Point3d{floor_point};
      auto body = capsule(base + floor_clearance * axis, axis, lateral,
                          stature - floor_clearance);
      // Tilted capsules may dip below the floor; raise them along N.
      const Eigen::RowVectorXd heights =
          (N.transpose() * body).array() + G.offset();
      if (heights.minCoeff() < 0.5 * floor_clearance)
      {
        const auto lift = floor_clearance - heights.minCoeff();
        base += lift * N;
        body.colwise() += lift * N;
      }

      const Point3d ankles = base + spec.ankle_height * axis;
      const auto head_extent = stature - spec.ankle_height - torso_length;
      auto person = SimPerson{};
      person.id = id;
      person.stance = stance;
      person.stature = stature;
      person.torso_length = torso_length;
      person.axis = axis;
      for (const auto& t : joint_templates)
      {
        const auto h = t.head ? torso_length + t.height * head_extent
                              : t.height * torso_length;
        person.joints[std::size_t(t.joint)] =
            ankles + h * axis + t.lateral * lateral;
      }
      const auto& j = person.joints;
      auto joint = [&](Joint name) { return j[std::size_t(name)]; };
      person.P_a = 0.5 * (joint(Joint::LeftAnkle) + joint(Joint::RightAnkle));
      person.P_s =
          0.5 * (joint(Joint::LeftShoulder) + joint(Joint::RightShoulder));
      person.P_t = 0.25 * (joint(Joint::LeftShoulder) +
                           joint(Joint::RightShoulder) +
                           joint(Joint::LeftHip) + joint(Joint::RightHip));
      person.d = signed_distance(person.P_t, G);
      person.P_v = foot_on_plane(person.P_t, G);
      person.body = std::move(body);
      return person;
    }

    auto fully_visible(const SimPerson& person, const SceneSpec& spec) -> bool
    {
      for (const auto& J : person.joints)
        if (!visible(J, spec))
          return false;
      for (auto c = Eigen::Index{0}; c < person.body.cols(); ++c)
        if (!visible(person.body.col(c), spec))
          return false;
      return visible(person.P_v, spec) && visible(person.P_t, spec);
    }

  }  // namespace

  auto SceneSpec::validate() const -> void
  {
    auto fail = [](const std::string& what) {
      throw Error{ErrorCode::ConfigError, "scene spec: " + what};
    };
    if (image_width <= 0 || image_height <= 0)
      fail("image dimensions must be positive");
    if (!(camera.f > 0))
      fail("focal length must be positive");
    if (person_count < 0)
      fail("negative person count");
    if (!(depth_min > 0) || !(depth_max > depth_min))
      fail("need 0 < depth_min < depth_max");
    if (!(height_min > 0) || !(height_max >= height_min))
      fail("need 0 < height_min <= height_max");
    if (!(torso_length > 0) || torso_length_jitter < 0 ||
        torso_length_jitter >= 1)
      fail("torso length must be positive, jitter in [0, 1)");
    if (!(height_min > ankle_height + torso_length * (1 + torso_length_jitter)))
      fail("stature must exceed ankle height plus torso length");
    if (standing_fraction < 0 || standing_fraction > 1)
      fail("standing fraction must lie in [0, 1]");
    if (keypoint_noise < 0 || ankle_height < 0 || max_tilt_deg < 0)
      fail("noise, ankle height and tilt must be non-negative");
    if (!(ground.offset() > 0))
      fail("camera must lie above the floor");
  }

  auto ground_from_pitch_roll(double pitch_deg, double roll_deg, double height)
      -> GroundPlaned
  {
    const auto pitch = pitch_deg * deg;
    const Point3d up{0., -std::cos(pitch), -std::sin(pitch)};
    const Eigen::AngleAxisd roll{roll_deg * deg, Point3d::UnitZ()};
    return GroundPlaned{roll * up, height};
  }

  auto generate(const SceneSpec& spec) -> Scene
  {
    spec.validate();
    const auto& G = spec.ground;
    const auto& N = G.normal();

    // Floor frame: origin below the camera, e1 toward camera-right, e2 away
    // from the camera.
    const Point3d origin = -G.offset() * N;
    Point3d e1 = Point3d::UnitX() - N.x() * N;
    if (e1.norm() < 1e-9)
      throw Error{ErrorCode::SceneInfeasible, "camera looks straight down"};
    e1.normalize();
    Point3d e2 = N.cross(e1);
    if (e2.z() < 0)
      e2 = -e2;
    if (!(e2.z() > 1e-6))
      throw Error{ErrorCode::SceneInfeasible, "floor not in front of camera"};

    // Forward floor distance bracketing the requested depth range.
    const auto forward_min = std::max(0., (spec.depth_min - origin.z()) / e2.z());
    const auto forward_max = (spec.depth_max - origin.z()) / e2.z();
    if (!(forward_max > forward_min))
      throw Error{ErrorCode::SceneInfeasible, "depth range misses the floor"};
    const auto half_width_slope =
        0.5 * spec.image_width / spec.camera.f * 1.2;

    auto rng = RandomStream{spec.seed, layout_stream};
    auto scene = Scene{spec, {}};
    for (int id = 0; id < spec.person_count; ++id)
    {
      auto placed = false;
      for (int attempt = 0; attempt < rejection_budget && !placed; ++attempt)
      {
        // Area-uniform: forward distance with density proportional to the
        // visible width, which grows linearly with distance.
        const auto a2 = std::sqrt(rng.uniform(forward_min * forward_min,
                                              forward_max * forward_max));
        const auto lateral_half = half_width_slope * (a2 + G.offset());
        const auto a1 = rng.uniform(-lateral_half, lateral_half);
        const auto stature = rng.uniform(spec.height_min, spec.height_max);
        const auto length =
            spec.torso_length *
            (1 + spec.torso_length_jitter * rng.uniform(-1., 1.));
        const auto standing = rng.uniform() < spec.standing_fraction;
        const auto tilt = rng.uniform(10., std::max(10., spec.max_tilt_deg));
        const auto tilt_heading = rng.uniform(0., 2 * std::numbers::pi);

        const Point3d floor_point = origin + a1 * e1 + a2 * e2;
        if (floor_point.z() < spec.depth_min || floor_point.z() > spec.depth_max)
          continue;

        auto axis = Point3d{N};
        if (!standing)
        {
          const Point3d tilt_axis =
              std::cos(tilt_heading) * e1 + std::sin(tilt_heading) * e2;
          axis = Eigen::AngleAxisd{tilt * deg, tilt_axis} * N;
        }
        auto person = make_person(id, floor_point, axis,
                                  standing ? Stance::Standing : Stance::Tilted,
                                  stature, length, spec);
        if (!fully_visible(person, spec))
          continue;
        scene.people.push_back(std::move(person));
        placed = true;
      }
      if (!placed)
        throw Error{ErrorCode::SceneInfeasible,
                    "no visible floor position found for person " +
                        std::to_string(id)};
    }
    return scene;
  }

  auto render_annotations(const Scene& scene, const RenderOptions& options)
      -> AnnotationSet
  {
    const auto& spec = scene.spec;
    const auto& K = spec.camera;
    auto set = AnnotationSet{spec.image_width, spec.image_height, {}};
    set.people.reserve(scene.people.size());

    for (const auto& person : scene.people)
    {
      auto rng = RandomStream{spec.seed, std::uint64_t(person.id) + 1};
      auto noise = [&]() -> Pixeld {
        if (options.keypoint_noise == 0)
          return Pixeld::Zero();
        const auto u = rng.normal();
        const auto v = rng.normal();
        return options.keypoint_noise * Pixeld{u, v};
      };

      auto out = AnnotatedPerson{};
      out.id = person.id;
      for (auto j = std::size_t{0}; j < joint_count; ++j)
      {
        const Pixeld p = project(person.joints[j], K);
        out.keypoints[j] = {p + noise(), 1.};
      }

      auto lo = Pixeld{Pixeld::Constant(std::numeric_limits<double>::max())};
      auto hi = Pixeld{Pixeld::Constant(std::numeric_limits<double>::lowest())};
      for (auto c = Eigen::Index{0}; c < person.body.cols(); ++c)
      {
        const Pixeld p = project(Point3d(person.body.col(c)), K);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
      out.box = {lo.x(), lo.y(), hi.x() - lo.x(), hi.y() - lo.y()};

      const Pixeld p_t = project(person.P_t, K);
      const Pixeld p_v = project(person.P_v, K);
      out.torso = p_t + (options.noise_torso ? noise() : Pixeld::Zero());
      out.hvip = p_v + (options.noise_hvip ? noise() : Pixeld::Zero());
      const Pixeld down = downward_direction(*out.torso, K,
                                             spec.ground.normal());
      out.hvip_offset = (*out.hvip - *out.torso).dot(down);

      if (options.include_body)
      {
        out.body_points = PointSetd{person.body.colwise() - person.P_t};
        out.body_torso = Point3d::Zero();
      }
      set.people.push_back(std::move(out));
    }
    return set;
  }

  auto pyramid_slope(std::span<const Box> boxes) -> double
  {
    if (boxes.size() < 2)
      throw Error{ErrorCode::Undefined, "slope needs at least two boxes"};
    auto mean_x = 0., mean_y = 0.;
    for (const auto& b : boxes)
    {
      mean_x += b.bottom();
      mean_y += b.h;
    }
    mean_x /= double(boxes.size());
    mean_y /= double(boxes.size());
    auto sxx = 0., sxy = 0.;
    for (const auto& b : boxes)
    {
      sxx += (b.bottom() - mean_x) * (b.bottom() - mean_x);
      sxy += (b.bottom() - mean_x) * (b.h - mean_y);
    }
    if (!(sxx > 0))
      throw Error{ErrorCode::Undefined, "all boxes on one row"};
    return sxy / sxx;
  }

}  // namespace crowdloc
