#include <crowdloc/metrics.hpp>
#include <crowdloc/random.hpp>
#include <crowdloc/skeleton.hpp>

#include <Eigen/Geometry>

#include <doctest.h>

#include <algorithm>
#include <array>
#include <numeric>

using namespace crowdloc;

namespace {

  using Cloud = Eigen::Matrix3Xd;

  auto random_cloud(RandomStream& rng, int n) -> Cloud
  {
    auto c = Cloud{3, n};
    for (int i = 0; i < n; ++i)
      c.col(i) = Eigen::Vector3d{rng.uniform(-20, 20), rng.uniform(0, 3),
                                 rng.uniform(10, 80)};
    return c;
  }

  auto random_rotation(RandomStream& rng) -> Eigen::Matrix3d
  {
    const Eigen::Vector3d axis =
        Eigen::Vector3d{rng.normal(), rng.normal(), rng.normal()}.normalized();
    return Eigen::AngleAxisd{rng.uniform(-3, 3), axis}.toRotationMatrix();
  }

  // Brute-force references over ordered pairs, written against plain arrays.
  auto reference_ppds(const Cloud& E, const Cloud& G) -> double
  {
    const auto n = int(G.cols());
    auto total = 0.;
    auto count = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
      {
        if (a == b)
          continue;
        auto dg = 0., de = 0.;
        for (int r = 0; r < 3; ++r)
        {
          dg += (G(r, a) - G(r, b)) * (G(r, a) - G(r, b));
          de += (E(r, a) - E(r, b)) * (E(r, a) - E(r, b));
        }
        dg = std::sqrt(dg);
        de = std::sqrt(de);
        if (dg < 1e-9)
          continue;
        const auto rel = std::fabs((de - dg) / dg);
        total += 1 - (rel < 1 ? rel : 1);
        ++count;
      }
    return total / count;
  }

  auto reference_pa_ppds(const Cloud& E, const Cloud& G) -> double
  {
    const Eigen::Matrix4d T = Eigen::umeyama(E, G, true);
    const Cloud aligned =
        (T.topLeftCorner<3, 3>() * E).colwise() + T.topRightCorner<3, 1>();
    return reference_ppds(aligned, G);
  }

  auto reference_pcod(const Cloud& E, const Cloud& G) -> double
  {
    const auto n = int(G.cols());
    auto agree = 0, total = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
      {
        if (a == b)
          continue;
        const auto de = E(2, a) - E(2, b);
        const auto dg = G(2, a) - G(2, b);
        const auto se = std::fabs(de) <= 1e-6 ? 0 : (de < 0 ? -1 : 1);
        const auto sg = std::fabs(dg) <= 1e-6 ? 0 : (dg < 0 ? -1 : 1);
        agree += se == sg;
        ++total;
      }
    return 100. * agree / total;
  }

  auto crowd(const Cloud& E, const Cloud& G) -> MatchedCrowd<double>
  {
    return {E, G};
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

}  // namespace

TEST_CASE("ppds hand cases")
{
  auto G = Cloud{3, 2};
  G << 0, 10, 0, 0, 0, 0;
  CHECK(ppds(crowd(G, G)) == 1.);

  auto E = Cloud{3, 2};
  E << 0, 12, 0, 0, 0, 0;
  CHECK(ppds(crowd(E, G)) == doctest::Approx(0.8).epsilon(1e-15));
  E << 0, 25, 0, 0, 0, 0;
  CHECK(ppds(crowd(E, G)) == 0.);

  CHECK(code_of([&] { ppds(crowd(G.leftCols(1), G.leftCols(1))); }) ==
        ErrorCode::Undefined);

  SUBCASE("coincident ground-truth pairs are skipped")
  {
    auto G3 = Cloud{3, 3};
    G3 << 0, 0, 10, 0, 0, 0, 0, 0, 0;
    auto E3 = Cloud{3, 3};
    E3 << 0, 1, 10, 0, 0, 0, 0, 0, 0;
    const auto detail = ppds_detail<double>(E3, G3);
    CHECK(detail.skipped == 1);
    CHECK(detail.pairs == 2);
    CHECK(detail.value == doctest::Approx((1. + 0.9) / 2));
    auto same = Cloud{3, 2};
    same.setZero();
    CHECK(code_of([&] { ppds(crowd(same, same)); }) == ErrorCode::Undefined);
  }
}

TEST_CASE("procrustes_align")
{
  auto rng = RandomStream{101, 0};
  const auto G = random_cloud(rng, 12);

  const auto identity = procrustes_align(crowd(G, G)).transform;
  CHECK(identity.scale == doctest::Approx(1.));
  CHECK(identity.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-12));
  CHECK(identity.translation.norm() < 1e-9);
  CHECK_FALSE(identity.degenerate);

  // E = 2 Rz(90°) G + t; the alignment must invert it.
  const Eigen::Matrix3d Rz =
      Eigen::AngleAxisd{M_PI / 2, Eigen::Vector3d::UnitZ()}.toRotationMatrix();
  const Eigen::Vector3d t{3, -1, 7};
  const Cloud E = (2 * Rz * G).colwise() + t;
  const auto alignment = procrustes_align(crowd(E, G));
  CHECK(alignment.transform.scale == doctest::Approx(0.5));
  CHECK(alignment.transform.rotation.isApprox(Rz.transpose(), 1e-12));
  CHECK((alignment.aligned - G).norm() < 1e-9);
  CHECK(alignment.transform.rotation.determinant() == doctest::Approx(1.));

  SUBCASE("collinear points are flagged")
  {
    auto line = Cloud{3, 3};
    line << 0, 1, 2, 0, 1, 2, 0, 1, 2;
    CHECK(procrustes_align(crowd(line, line)).transform.degenerate);
  }

  SUBCASE("zero-variance estimates")
  {
    const Cloud same = Cloud::Ones(3, 5);
    CHECK(code_of([&] { procrustes_align(crowd(same, G.leftCols(5))); }) ==
          ErrorCode::DegenerateAlignment);
  }
}

TEST_CASE("pa_ppds")
{
  auto rng = RandomStream{103, 0};
  const auto G = random_cloud(rng, 15);
  const Cloud similar =
      (0.37 * random_rotation(rng) * G).colwise() + Eigen::Vector3d{1, 2, 3};
  CHECK(pa_ppds(crowd(similar, G)) == doctest::Approx(1.).epsilon(1e-12));

  const Cloud doubled = 2 * G;
  CHECK(ppds(crowd(doubled, G)) == doctest::Approx(0.).epsilon(1e-12));
  CHECK(pa_ppds(crowd(doubled, G)) == doctest::Approx(1.).epsilon(1e-12));
}

TEST_CASE("pcod")
{
  auto G = Cloud{3, 3};
  G << 0, 0, 0, 0, 0, 0, 1, 2, 3;
  CHECK(pcod(crowd(G, G)) == 100.);
  auto E = Cloud{3, 3};
  E << 0, 0, 0, 0, 0, 0, 1, 3, 2;
  CHECK(pcod(crowd(E, G)) == doctest::Approx(200. / 3.));
  E << 0, 0, 0, 0, 0, 0, 3, 2, 1;
  CHECK(pcod(crowd(E, G)) == 0.);
  CHECK(code_of([&] { pcod(crowd(E.leftCols(1), G.leftCols(1))); }) ==
        ErrorCode::Undefined);
}

TEST_CASE("oks")
{
  const auto n = int(joint_count);
  auto truth = Eigen::Matrix2Xd{2, n};
  auto rng = RandomStream{107, 0};
  for (int j = 0; j < n; ++j)
    truth.col(j) = Eigen::Vector2d{rng.uniform(0, 100), rng.uniform(0, 200)};
  auto k = std::vector<double>{};
  for (const auto s : keypoint_sigmas)
    k.push_back(2 * s);
  auto visible = std::array<bool, joint_count>{};
  visible.fill(true);
  const auto scale = 80.;

  CHECK(oks<double>(truth, truth, visible, scale, k) == 1.);

  // One keypoint displaced by s k_i contributes exp(-1/2).
  auto one = Eigen::Matrix2Xd{truth};
  one(0, 5) += scale * k[5];
  CHECK(oks<double>(one, truth, visible, scale, k) ==
        doctest::Approx((n - 1 + std::exp(-0.5)) / n).epsilon(1e-15));

  const Eigen::Matrix2Xd far = truth.array() + 1e12;
  CHECK(oks<double>(far, truth, visible, scale, k) == 0.);

  visible.fill(false);
  CHECK(code_of([&] { oks<double>(truth, truth, visible, scale, k); }) ==
        ErrorCode::Undefined);
}

TEST_CASE("metrics match brute-force references up to n = 200")
{
  auto rng = RandomStream{109, 0};
  for (const auto n : {2, 3, 5, 10, 37, 100, 200})
  {
    CAPTURE(n);
    const auto G = random_cloud(rng, n);
    Cloud E = G;
    for (int i = 0; i < n; ++i)
      E.col(i) += Eigen::Vector3d{rng.normal(), 0.2 * rng.normal(),
                                  3 * rng.normal()};
    if (n >= 3)
      CHECK(std::abs(pa_ppds(crowd(E, G)) - reference_pa_ppds(E, G)) <= 1e-12);
    CHECK(std::abs(ppds(crowd(E, G)) - reference_ppds(E, G)) <= 1e-12);
    CHECK(std::abs(pcod(crowd(E, G)) - reference_pcod(E, G)) <= 1e-12);

    auto est = Eigen::Matrix2Xd{2, Eigen::Index(joint_count)};
    auto gt = Eigen::Matrix2Xd{2, Eigen::Index(joint_count)};
    auto visible = std::array<bool, joint_count>{};
    auto k = std::vector<double>{};
    for (auto j = std::size_t{0}; j < joint_count; ++j)
    {
      gt.col(Eigen::Index(j)) = Eigen::Vector2d{rng.uniform(0, 500), rng.uniform(0, 500)};
      est.col(Eigen::Index(j)) =
          gt.col(Eigen::Index(j)) + 5 * Eigen::Vector2d{rng.normal(), rng.normal()};
      visible[j] = rng.uniform() < 0.8 || j == 0;
      k.push_back(2 * keypoint_sigmas[j]);
    }
    auto sum = 0.;
    auto count = 0;
    for (auto j = std::size_t{0}; j < joint_count; ++j)
      if (visible[j])
      {
        const auto dx = est(0, Eigen::Index(j)) - gt(0, Eigen::Index(j));
        const auto dy = est(1, Eigen::Index(j)) - gt(1, Eigen::Index(j));
        sum += std::exp(-(dx * dx + dy * dy) / (2 * 50. * 50. * k[j] * k[j]));
        ++count;
      }
    CHECK(std::abs(oks<double>(est, gt, visible, 50., k) - sum / count) <= 1e-12);
  }
}

TEST_CASE("metric invariances")
{
  auto rng = RandomStream{113, 0};
  const auto G = random_cloud(rng, 40);
  Cloud E = G;
  for (int i = 0; i < 40; ++i)
    E.col(i) += Eigen::Vector3d{rng.normal(), rng.normal(), rng.normal()};

  const auto R = random_rotation(rng);
  const Eigen::Vector3d t{5, -2, 9};
  const Cloud rigid = (R * E).colwise() + t;
  CHECK(ppds(crowd(rigid, G)) == doctest::Approx(ppds(crowd(E, G))).epsilon(1e-12));
  const Cloud similar = (3.5 * R * E).colwise() + t;
  CHECK(pa_ppds(crowd(similar, G)) ==
        doctest::Approx(pa_ppds(crowd(E, G))).epsilon(1e-10));
  CHECK(ppds(crowd(Cloud(2 * E), G)) != doctest::Approx(ppds(crowd(E, G))));

  auto order = std::vector<int>(40);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::swap(order[3], order[17]);
  Cloud Ep{3, 40}, Gp{3, 40};
  for (int i = 0; i < 40; ++i)
  {
    Ep.col(i) = E.col(order[std::size_t(i)]);
    Gp.col(i) = G.col(order[std::size_t(i)]);
  }
  CHECK(ppds(crowd(Ep, Gp)) == doctest::Approx(ppds(crowd(E, G))).epsilon(1e-12));
  CHECK(pa_ppds(crowd(Ep, Gp)) == doctest::Approx(pa_ppds(crowd(E, G))).epsilon(1e-12));
  CHECK(pcod(crowd(Ep, Gp)) == pcod(crowd(E, G)));
}

TEST_CASE("assign matches brute force on small matrices")
{
  auto rng = RandomStream{127, 0};
  for (int trial = 0; trial < 100; ++trial)
  {
    const auto rows = int(rng.uniform(1, 6.99));
    const auto cols = int(rng.uniform(1, 6.99));
    auto cost = Eigen::MatrixXd{rows, cols};
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        cost(i, j) = rng.uniform(0, 10);
    const auto result = assign(cost, 1e9);

    // Brute force over injective maps of the smaller side.
    const auto small = std::min(rows, cols);
    auto best = 1e300;
    auto perm = std::vector<int>(std::size_t(std::max(rows, cols)));
    std::iota(perm.begin(), perm.end(), 0);
    do
    {
      auto total = 0.;
      for (int i = 0; i < small; ++i)
        total += rows <= cols ? cost(i, perm[std::size_t(i)])
                              : cost(perm[std::size_t(i)], i);
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));

    auto total = 0.;
    auto matched = 0;
    auto used = std::vector<int>(std::size_t(cols), 0);
    for (int i = 0; i < rows; ++i)
      if (result[std::size_t(i)] >= 0)
      {
        total += cost(i, result[std::size_t(i)]);
        ++matched;
        CHECK(used[std::size_t(result[std::size_t(i)])]++ == 0);
      }
    CHECK(matched == small);
    CHECK(total == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("assign respects the gate")
{
  auto cost = Eigen::MatrixXd{2, 2};
  cost << 1, 50, 50, 60;
  const auto result = assign(cost, 10);
  CHECK(result[0] == 0);
  CHECK(result[1] == -1);
}
