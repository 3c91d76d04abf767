#include <crowdloc/calibration.hpp>
#include <crowdloc/simulation.hpp>

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace crowdloc;

namespace {

  auto spec_with(std::uint64_t seed, int count) -> SceneSpec
  {
    auto spec = SceneSpec{};
    spec.seed = seed;
    spec.person_count = count;
    return spec;
  }

  auto inside(const Pixeld& p, const SceneSpec& spec) -> bool
  {
    return p.x() >= 0 && p.x() <= spec.image_width && p.y() >= 0 &&
           p.y() <= spec.image_height;
  }

}  // namespace

TEST_CASE("same seed gives the same scene")
{
  auto spec = spec_with(7, 40);
  spec.standing_fraction = 0.5;
  const auto a = generate(spec);
  const auto b = generate(spec);
  REQUIRE(a.people.size() == b.people.size());
  for (auto i = std::size_t{0}; i < a.people.size(); ++i)
  {
    CHECK(a.people[i].P_t == b.people[i].P_t);
    CHECK(a.people[i].body == b.people[i].body);
  }
  const auto other = generate(spec_with(8, 40));
  CHECK(other.people[0].P_t != a.people[0].P_t);
}

TEST_CASE("empty scene")
{
  const auto scene = generate(spec_with(1, 0));
  CHECK(scene.people.empty());
  CHECK(render_annotations(scene, {}).people.empty());
}

TEST_CASE("invalid specs")
{
  auto spec = SceneSpec{};
  auto code = [&] {
    try
    {
      generate(spec);
    }
    catch (const Error& e)
    {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  SUBCASE("negative count")
  {
    spec.person_count = -1;
    CHECK(code() == ErrorCode::ConfigError);
  }
  SUBCASE("fraction out of range")
  {
    spec.standing_fraction = 1.5;
    CHECK(code() == ErrorCode::ConfigError);
  }
  SUBCASE("depth range beyond the visible floor")
  {
    spec.depth_min = 1;
    spec.depth_max = 2;
    CHECK(code() == ErrorCode::SceneInfeasible);
  }
  SUBCASE("camera looking up")
  {
    spec.ground = GroundPlaned{Point3d{0., -0.5, 0.86}, 12.};
    CHECK(code() == ErrorCode::SceneInfeasible);
  }
}

TEST_CASE("500 people over a deep range all project inside the image")
{
  auto spec = spec_with(2, 500);
  spec.depth_min = 10;
  spec.depth_max = 200;
  spec.standing_fraction = 0.7;
  const auto scene = generate(spec);
  REQUIRE(scene.people.size() == 500);
  for (const auto& person : scene.people)
  {
    CHECK(person.P_t.z() > 0);
    for (const auto& J : person.joints)
      CHECK(inside(project(J, spec.camera), spec));
    for (auto c = Eigen::Index{0}; c < person.body.cols(); ++c)
      CHECK(inside(project(Point3d(person.body.col(c)), spec.camera), spec));
  }
}

TEST_CASE("person invariants")
{
  auto spec = spec_with(3, 200);
  spec.standing_fraction = 0.5;
  const auto scene = generate(spec);
  const auto& G = spec.ground;
  for (const auto& person : scene.people)
  {
    CHECK(std::abs(signed_distance(person.P_v, G)) < 1e-9);
    CHECK(person.d > 0);
    CHECK((person.P_v + person.d * G.normal() - person.P_t).norm() < 1e-9);
    CHECK(person.P_v.z() >= spec.depth_min - 5);
    const Eigen::RowVectorXd heights =
        (G.normal().transpose() * person.body).array() + G.offset();
    CHECK(heights.minCoeff() > 0);
    if (person.stance == Stance::Standing)
    {
      const Point3d segment = (person.P_s - person.P_a).normalized();
      const auto angle = std::acos(std::min(1., segment.dot(G.normal())));
      CHECK(angle < 2 * std::numbers::pi / 180);
      CHECK(std::abs(signed_distance(person.P_a, G) - spec.ankle_height) <
            1e-9);
      CHECK((person.P_s - person.P_a).norm() ==
            doctest::Approx(spec.torso_length).epsilon(1e-12));
    }
  }
}

TEST_CASE("depths are spread across the range")
{
  const auto scene = generate(spec_with(4, 400));
  auto near = 0;
  for (const auto& person : scene.people)
    near += person.P_v.z() < 0.5 * (15 + 120);
  // Area-uniform placement puts fewer people near the camera.
  CHECK(near > 20);
  CHECK(near < 200);
}

TEST_CASE("noise-free annotations are exact projections")
{
  const auto scene = generate(spec_with(5, 30));
  const auto set = render_annotations(scene, {});
  REQUIRE(set.people.size() == scene.people.size());
  const auto& K = scene.spec.camera;
  for (auto i = std::size_t{0}; i < set.people.size(); ++i)
  {
    const auto& person = scene.people[i];
    const auto& out = set.people[i];
    CHECK(out.id == person.id);
    for (auto j = std::size_t{0}; j < joint_count; ++j)
      CHECK((out.keypoints[j].p - project(person.joints[j], K)).norm() <
            1e-12);
    CHECK((*out.torso - project(person.P_t, K)).norm() < 1e-12);
    CHECK((*out.hvip - project(person.P_v, K)).norm() < 1e-12);
    CHECK(*out.hvip_offset > 0);
    REQUIRE(out.body_points);
    CHECK(out.body_points->cols() == 50);
  }
}

TEST_CASE("noise magnitude matches the Rayleigh mean")
{
  const auto scene = generate(spec_with(6, 300));
  const auto sigma = 2.;
  const auto noisy =
      render_annotations(scene, RenderOptions{sigma, false, false, true});
  const auto exact = render_annotations(scene, {});
  auto sum = 0.;
  auto count = 0;
  for (auto i = std::size_t{0}; i < noisy.people.size(); ++i)
  {
    for (auto j = std::size_t{0}; j < joint_count; ++j)
    {
      sum += (noisy.people[i].keypoints[j].p - exact.people[i].keypoints[j].p)
                 .norm();
      ++count;
    }
    CHECK(*noisy.people[i].torso == *exact.people[i].torso);
    CHECK(*noisy.people[i].hvip == *exact.people[i].hvip);
  }
  // 5100 samples; standard error of the mean is about 0.015.
  CHECK(sum / count ==
        doctest::Approx(sigma * std::sqrt(std::numbers::pi / 2)).epsilon(0.03));
}

TEST_CASE("rendering a subset does not change the noise draws")
{
  const auto scene = generate(spec_with(9, 20));
  auto subset = Scene{scene.spec, {scene.people.begin() + 10, scene.people.end()}};
  const auto options = RenderOptions{2., true, true, false};
  const auto full = render_annotations(scene, options);
  const auto part = render_annotations(subset, options);
  for (auto i = std::size_t{0}; i < part.people.size(); ++i)
    CHECK(part.people[i].keypoints[3].p == full.people[i + 10].keypoints[3].p);
}

TEST_CASE("locating rendered people recovers the truth")
{
  auto spec = spec_with(10, 100);
  spec.standing_fraction = 0.5;
  const auto scene = generate(spec);
  const auto set = render_annotations(scene, {});
  const auto patch = Patch{0, 0, 0, spec.image_width, 0, false};
  for (auto i = std::size_t{0}; i < set.people.size(); ++i)
  {
    auto obs = PersonObservation{};
    obs.p_t_local = *set.people[i].torso;
    obs.hvip_offset = *set.people[i].hvip_offset;
    const auto located =
        locate(obs, patch, spec.camera, spec.ground);
    const auto& truth = scene.people[i].P_t;
    CHECK((located.P_t - truth).norm() / truth.norm() < 1e-6);
    CHECK(located.d == doctest::Approx(scene.people[i].d).epsilon(1e-6));
  }
}

namespace {

  auto standing_rate(const SceneSpec& base, double sigma) -> double
  {
    auto kept = 0;
    auto total = 0;
    for (const auto seed : {1, 2, 3, 4, 5})
    {
      auto spec = base;
      spec.seed = std::uint64_t(seed);
      const auto set = render_annotations(
          generate(spec), RenderOptions{sigma, false, false, false});
      auto keypoints = std::vector<KeypointSet>{};
      for (const auto& person : set.people)
        keypoints.push_back(person.keypoints);
      kept += int(select_standing(keypoints, 0.5).size());
      total += int(keypoints.size());
    }
    return double(kept) / total;
  }

}  // namespace

TEST_CASE("standing people pass the standing filter at near range")
{
  // Segments of 95 px and more; the feet rule tolerates 9.5 px there.
  auto spec = SceneSpec{};
  spec.person_count = 100;
  spec.depth_min = 15;
  spec.depth_max = 40;
  for (const auto sigma : {0., 1., 2.})
  {
    CAPTURE(sigma);
    CHECK(standing_rate(spec, sigma) > 0.95);
  }
}

TEST_CASE("standing filter acceptance follows the noise model")
{
  // Far people are short in the image, and the feet rule scales with
  // segment length: the left/right ankle row difference has deviation
  // sigma*sqrt(2) and must stay within 0.1 L, while the lateral offset
  // has deviation sigma and must stay within 0.2 L.
  auto spec = SceneSpec{};
  spec.person_count = 100;
  for (const auto sigma : {1., 2.})
  {
    auto expected = 0.;
    auto total = 0;
    for (const auto seed : {1, 2, 3, 4, 5})
    {
      spec.seed = std::uint64_t(seed);
      const auto set = render_annotations(generate(spec), {});
      for (const auto& person : set.people)
      {
        const auto& k = person.keypoints;
        const Pixeld segment =
            midpoint(k, Joint::LeftShoulder, Joint::RightShoulder) -
            midpoint(k, Joint::LeftAnkle, Joint::RightAnkle);
        const auto L = segment.norm();
        const auto feet = std::erf(0.1 * L / (2 * sigma));
        const auto lean =
            0.5 * (std::erf((0.2 * L - segment.x()) / (sigma * std::sqrt(2.))) +
                   std::erf((0.2 * L + segment.x()) / (sigma * std::sqrt(2.))));
        expected += feet * lean;
        ++total;
      }
    }
    spec.seed = 1;
    CAPTURE(sigma);
    CHECK(standing_rate(spec, sigma) ==
          doctest::Approx(expected / total).epsilon(0.05));
  }
}

TEST_CASE("tilted people are mostly rejected by the standing filter")
{
  auto spec = spec_with(11, 200);
  spec.standing_fraction = 0;
  spec.max_tilt_deg = 60;
  const auto set = render_annotations(generate(spec), {});
  auto keypoints = std::vector<KeypointSet>{};
  for (const auto& person : set.people)
    keypoints.push_back(person.keypoints);
  CHECK(select_standing(keypoints, 0.5).size() < keypoints.size() / 2);
}

TEST_CASE("pyramid property")
{
  for (const auto seed : {1, 2, 3})
  {
    const auto set = render_annotations(generate(spec_with(seed, 100)), {});
    auto boxes = std::vector<Box>{};
    for (const auto& person : set.people)
      boxes.push_back(person.box);
    CHECK(pyramid_slope(boxes) > 0);
  }
}

TEST_CASE("ground from pitch and roll")
{
  const auto level = ground_from_pitch_roll(0, 0, 5);
  CHECK((level.normal() - Point3d{0, -1, 0}).norm() < 1e-15);
  CHECK(level.offset() == 5);
  const auto pitched = ground_from_pitch_roll(15, 0, 12);
  CHECK((pitched.normal() - SceneSpec{}.ground.normal()).norm() < 1e-12);
  const auto rolled = ground_from_pitch_roll(15, 10, 12);
  CHECK(rolled.normal().z() == doctest::Approx(pitched.normal().z()));
  CHECK(rolled.normal().x() != doctest::Approx(0));
}
