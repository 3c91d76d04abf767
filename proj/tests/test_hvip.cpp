#include <crowdloc/hvip.hpp>
#include <crowdloc/random.hpp>

#include <doctest.h>

using namespace crowdloc;

namespace {

  const auto K0 = CameraIntrinsicsd{1000., 0., 0.};
  const auto G0 = GroundPlaned{Point3d{0., -1., 0.}, 2.};
  const auto origin_patch = Patch{0, 0, 0, 400, 0, false};

  auto with_offset(const Pixeld& p_t_local, double offset)
      -> PersonObservation
  {
    auto obs = PersonObservation{};
    obs.p_t_local = p_t_local;
    obs.hvip_offset = offset;
    return obs;
  }

  auto with_pixel(const Pixeld& p_t_local, const Pixeld& p_v_local)
      -> PersonObservation
  {
    auto obs = PersonObservation{};
    obs.p_t_local = p_t_local;
    obs.p_v_local = p_v_local;
    return obs;
  }

  auto code_of(auto&& f) -> std::optional<ErrorCode>
  {
    try
    {
      f();
    }
    catch (const Error& e)
    {
      return e.code();
    }
    return std::nullopt;
  }

  // Tilted camera with an off-center principal point.
  struct Scene
  {
    CameraIntrinsicsd K{2200., 1900., 1000.};
    GroundPlaned G{Point3d{0.05, -0.95, -0.3}, 9.};

    auto floor_point(double forward, double side) const -> Point3d
    {
      const Point3d foot = -G.offset() * G.normal();
      Point3d e2 = Point3d::UnitZ() - G.normal().z() * G.normal();
      e2.normalize();
      const Point3d e1 = G.normal().cross(e2);
      return foot + forward * e2 + side * e1;
    }
  };

}  // namespace

TEST_CASE("resolve_hvip_pixel")
{
  const Point3d N{0., -1., 0.};
  const auto r = resolve_hvip_pixel(with_offset({0, 100}, 100.), origin_patch,
                                    K0, N);
  CHECK(r.p_v.isApprox(Pixeld{0, 200}));
  CHECK(r.direction.isApprox(Pixeld{0, 1}));

  const auto zero = resolve_hvip_pixel(with_offset({0, 100}, 0.),
                                       origin_patch, K0, N);
  CHECK(zero.p_v == zero.p_t);

  SUBCASE("local coordinates are shifted by t_crop")
  {
    const auto patch = Patch{3, 400, 600, 300, 1, false};
    const auto shifted =
        resolve_hvip_pixel(with_offset({10, 20}, 30.), patch, K0, N);
    CHECK(shifted.p_t == Pixeld{410, 620});
    CHECK(shifted.p_v.isApprox(Pixeld{410, 650}));
  }

  SUBCASE("direct pixel on the line has zero deviation")
  {
    const auto on = resolve_hvip_pixel(with_pixel({5, 100}, {5, 260}),
                                       origin_patch, K0, N);
    CHECK(on.collinearity_deviation == 0.);
    const auto off = resolve_hvip_pixel(with_pixel({5, 100}, {8, 260}),
                                        origin_patch, K0, N);
    CHECK(off.collinearity_deviation == doctest::Approx(3.));
  }

  SUBCASE("torso pixel at a finite vanishing point")
  {
    // KN = (0, -600, -0.8) is the image point (0, 750).
    const Point3d tilted{0., -0.6, -0.8};
    CHECK(code_of([&] {
            resolve_hvip_pixel(with_offset({0, 750}, 10.), origin_patch, K0,
                               tilted);
          }) == ErrorCode::DirectionUndefined);
  }

  SUBCASE("exactly one hvip representation")
  {
    auto both = with_offset({0, 100}, 1.);
    both.p_v_local = Pixeld{0, 101};
    CHECK(code_of([&] { resolve_hvip_pixel(both, origin_patch, K0, N); }) ==
          ErrorCode::ObservationInvalid);
    auto neither = PersonObservation{};
    CHECK(code_of([&] { resolve_hvip_pixel(neither, origin_patch, K0, N); }) ==
          ErrorCode::ObservationInvalid);
  }

  SUBCASE("resolved pixels are collinear with the vanishing point")
  {
    const auto s = Scene{};
    auto rng = RandomStream{17, 0};
    for (int trial = 0; trial < 300; ++trial)
    {
      const Pixeld p_t{rng.uniform(0., 3800.), rng.uniform(0., 2000.)};
      const auto r = resolve_hvip_pixel(
          with_offset(p_t, rng.uniform(-200., 400.)), origin_patch, s.K,
          s.G.normal());
      const Eigen::Vector3d a = r.p_t.homogeneous();
      const Eigen::Vector3d b = r.p_v.homogeneous();
      const Eigen::Vector3d vp =
          vanishing_point(s.K, s.G.normal()).normalized();
      const Eigen::Vector3d line = a.cross(b);
      if (line.norm() == 0)
        continue;
      CHECK(std::abs(line.normalized().dot(vp)) < 1e-9);
    }
  }
}

TEST_CASE("locate worked example")
{
  const auto person = locate(with_pixel({0, 100}, {0, 200}), origin_patch, K0, G0);
  CHECK((person.P_v - Point3d{0., 2., 10.}).norm() < 1e-12);
  CHECK(std::abs(person.d - 1.) < 1e-12);
  CHECK((person.P_t - Point3d{0., 1., 10.}).norm() < 1e-12);
  CHECK(person.patch_id == 0);

  const auto flat = locate(with_pixel({0, 200}, {0, 200}), origin_patch, K0, G0);
  CHECK(std::abs(flat.d) < 1e-12);
  CHECK(flat.P_t.isApprox(flat.P_v));

  auto refined = with_pixel({0, 100}, {0, 200});
  refined.delta_t = Point3d{0., 0., 0.5};
  const auto shifted = locate(refined, origin_patch, K0, G0);
  CHECK((shifted.P_t - Point3d{0., 1., 10.5}).norm() < 1e-12);
}

TEST_CASE("locate errors")
{
  CHECK(code_of([&] {
          locate(with_pixel({0, 100}, {0, 0}), origin_patch, K0, G0);
        }) == ErrorCode::NoIntersection);
  CHECK(code_of([&] {
          locate(with_pixel({0, -300}, {0, -200}), origin_patch, K0, G0);
        }) == ErrorCode::BehindCamera);
  // N = (0.6, 0, -0.8) with the torso on the principal row.
  const auto G = GroundPlaned{Point3d{0.6, 0., -0.8}, 2.};
  CHECK(code_of([&] {
          locate(with_pixel({0, 0}, {0, 100}), origin_patch, K0, G);
        }) == ErrorCode::DegenerateRay);
}

TEST_CASE("locate recovers projected torso centers")
{
  const auto s = Scene{};
  auto rng = RandomStream{23, 0};
  for (int trial = 0; trial < 500; ++trial)
  {
    const Point3d P_v = s.floor_point(rng.uniform(5., 90.), rng.uniform(-15., 15.));
    const auto d = rng.uniform(0.2, 1.6);
    const Point3d P_t = P_v + d * s.G.normal();
    const auto patch = Patch{7, int(rng.uniform(0., 3000.)),
                             int(rng.uniform(0., 1500.)), 400, 0, false};
    const Pixeld p_t = project(P_t, s.K);
    const Pixeld p_v = project(P_v, s.K);

    const auto person = locate(
        with_pixel(global_to_local(p_t, patch), global_to_local(p_v, patch)),
        patch, s.K, s.G);
    CHECK((person.P_t - P_t).norm() <= 1e-6 * P_t.norm());
    CHECK(std::abs(signed_distance(person.P_v, s.G)) < 1e-6);
    // Torso height and plane distance are independent formulas.
    CHECK(std::abs(person.d - signed_distance(person.P_t, s.G)) < 1e-9);
    CHECK((project(person.P_t, s.K) - p_t).norm() < 1e-6);

    // Offset form of the same observation.
    const auto down = downward_direction(p_t, s.K, s.G.normal());
    const auto offset_person = locate(
        with_offset(global_to_local(p_t, patch), (p_v - p_t).dot(down)), patch,
        s.K, s.G);
    CHECK((offset_person.P_t - P_t).norm() <= 1e-6 * P_t.norm());
  }
}

TEST_CASE("locate is equivariant under translations along the floor")
{
  const auto s = Scene{};
  const Point3d P_v = s.floor_point(30., 2.);
  const Point3d P_t = P_v + 1.1 * s.G.normal();
  const Point3d shift = s.floor_point(42., -5.) - s.floor_point(30., 2.);
  auto run = [&](const Point3d& offset) {
    return locate_pixels(project(Point3d(P_t + offset), s.K),
                         project(Point3d(P_v + offset), s.K), s.K, s.G)
        .P_t;
  };
  CHECK((run(shift) - run(Point3d::Zero()) - shift).norm() < 1e-9);
}

TEST_CASE("place_body")
{
  auto body = PointSetd{3, 3};
  body << 0, 1, -1,  //
      0, 0.5, 2,     //
      0, -1, 0.25;
  const auto placed = place_body(body, Point3d{0, 0, 0}, Point3d{0, 1, 10});
  CHECK(placed.isApprox(PointSetd(body.colwise() + Point3d{0, 1, 10})));
  CHECK(place_body(body, Point3d{1, 2, 3}, Point3d{1, 2, 3}) == body);
  const auto moved = place_body(body, Point3d{0.3, 0, 1}, Point3d{4, 5, 6});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK((moved.col(i) - moved.col(j)).norm() ==
            doctest::Approx((body.col(i) - body.col(j)).norm()));
}

TEST_CASE("ground_normal_loss")
{
  const Point3d N{0., -1., 0.};
  const Point3d P_a{0., 2., 10.};
  CHECK(ground_normal_loss(Point3d(P_a + 1.4 * N), P_a, N) == 0.);
  CHECK(ground_normal_loss(Point3d(P_a + Point3d{1.4, 0, 0}), P_a, N) ==
        doctest::Approx(1.));
  CHECK(ground_normal_loss(Point3d(P_a - 1.4 * N), P_a, N) == 2.);
  CHECK(code_of([&] { ground_normal_loss(P_a, P_a, N); }) ==
        ErrorCode::ObservationInvalid);
}

TEST_CASE("out_of_bound_loss")
{
  auto points = PointSetd{3, 3};
  points << 0, 1, 2,  //
      1, 0, 1.5,      //
      10, 10, 10;
  CHECK(out_of_bound_loss(points, G0) == 0.);

  points(1, 2) = 2.05;
  CHECK(out_of_bound_loss(points, G0) == doctest::Approx(0.05).epsilon(1e-9));
  points(1, 0) = 2.02;
  points(1, 2) = 2.07;
  CHECK(out_of_bound_loss(points, G0) == doctest::Approx(0.07).epsilon(1e-9));
  CHECK(code_of([&] { out_of_bound_loss(PointSetd{3, 0}, G0); }) ==
        ErrorCode::ObservationInvalid);

  SUBCASE("zero exactly when nothing is below the plane")
  {
    auto rng = RandomStream{29, 0};
    for (int trial = 0; trial < 200; ++trial)
    {
      auto cloud = PointSetd{3, 20};
      for (int c = 0; c < 20; ++c)
        cloud.col(c) = Point3d{rng.uniform(-1, 1), rng.uniform(0.5, 2.2),
                               rng.uniform(5, 15)};
      const auto min_distance =
          ((G0.normal().transpose() * cloud).array() + G0.offset()).minCoeff();
      CHECK((out_of_bound_loss(cloud, G0) == 0.) == (min_distance >= 0.));
    }
  }
}

TEST_CASE("conditioning")
{
  const auto K = CameraIntrinsicsd{27000., 9600., 3240.};
  const auto patch = Patch{0, 9500, 3140, 200, 0, false};
  const auto c = conditioning(K, patch, 19200.);
  CHECK(c.f_norm == 1.40625);
  CHECK(c.shift.isZero());
  const auto right = Patch{1, 9700, 3140, 200, 0, false};
  CHECK(conditioning(K, right, 19200.).shift.isApprox(Pixeld{1., 0.}));
}

TEST_CASE("body plane proxies of an upright person")
{
  const auto s = Scene{};
  const Point3d P_a = s.floor_point(25., 3.) + 0.1 * s.G.normal();
  const Point3d P_s = P_a + 1.4 * s.G.normal();
  const Point3d P_t = P_a + 1.0 * s.G.normal();
  const auto a = body_plane_proxy(project(P_a, s.K), P_t, s.K, s.G.normal());
  const auto b = body_plane_proxy(project(P_s, s.K), P_t, s.K, s.G.normal());
  CHECK((a - P_a).norm() < 1e-9);
  CHECK((b - P_s).norm() < 1e-9);
  CHECK(ground_normal_loss(b, a, s.G.normal()) < 1e-12);
}
