#pragma once

#include <crowdloc/error.hpp>

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <span>
#include <vector>


namespace crowdloc {

  //! Estimated and ground-truth person locations, column i matched to i.
  template <typename T>
  struct MatchedCrowd
  {
    Eigen::Matrix<T, 3, Eigen::Dynamic> estimates;
    Eigen::Matrix<T, 3, Eigen::Dynamic> truth;

    auto size() const -> Eigen::Index
    {
      return truth.cols();
    }
  };

  //! Ground-truth pairs closer than this are skipped by PPDS.
  inline constexpr double coincident_pair_threshold = 1e-9;

  template <typename T>
  struct PpdsResult
  {
    T value;
    Eigen::Index pairs;
    Eigen::Index skipped;
  };

  //! Mean over pairs of 1 - min(d_ik, 1), d_ik the relative error of the
  //! estimated pairwise distance.
  template <typename T>
  auto ppds_detail(const Eigen::Matrix<T, 3, Eigen::Dynamic>& E,
                   const Eigen::Matrix<T, 3, Eigen::Dynamic>& G)
      -> PpdsResult<T>
  {
    using std::abs;
    using std::min;
    const auto n = G.cols();
    if (n < 2 || E.cols() != n)
      throw Error{ErrorCode::Undefined, "PPDS needs at least two matched people"};

    auto sum = T(0);
    auto pairs = Eigen::Index{0};
    auto skipped = Eigen::Index{0};
    for (auto k = Eigen::Index{0}; k < n; ++k)
      for (auto i = k + 1; i < n; ++i)
      {
        const T truth = (G.col(k) - G.col(i)).norm();
        if (truth < T(coincident_pair_threshold))
        {
          ++skipped;
          continue;
        }
        const T estimate = (E.col(k) - E.col(i)).norm();
        sum += T(1) - min(abs((estimate - truth) / truth), T(1));
        ++pairs;
      }
    if (pairs == 0)
      throw Error{ErrorCode::Undefined, "all ground-truth pairs coincide"};
    return {sum / T(pairs), pairs, skipped};
  }

  template <typename T>
  auto ppds(const MatchedCrowd<T>& crowd) -> T
  {
    return ppds_detail(crowd.estimates, crowd.truth).value;
  }

  //! x ↦ s R x + t.
  template <typename T>
  struct Similarity
  {
    T scale = T(1);
    Eigen::Matrix<T, 3, 3> rotation = Eigen::Matrix<T, 3, 3>::Identity();
    Eigen::Matrix<T, 3, 1> translation = Eigen::Matrix<T, 3, 1>::Zero();
    //! Set when the rotation is not unique (fewer than 3 points, or all
    //! points collinear).
    bool degenerate = false;

    auto apply(const Eigen::Matrix<T, 3, Eigen::Dynamic>& X) const
        -> Eigen::Matrix<T, 3, Eigen::Dynamic>
    {
      return ((scale * rotation) * X).colwise() + translation;
    }
  };

  template <typename T>
  struct Alignment
  {
    Similarity<T> transform;
    Eigen::Matrix<T, 3, Eigen::Dynamic> aligned;
  };

  //! Least-squares similarity taking estimates onto ground truth, from the
  //! SVD of the cross-covariance with a reflection guard.
  template <typename T>
  auto procrustes_align(const MatchedCrowd<T>& crowd) -> Alignment<T>
  {
    using Vec = Eigen::Matrix<T, 3, 1>;
    using Mat = Eigen::Matrix<T, 3, 3>;
    const auto& E = crowd.estimates;
    const auto& G = crowd.truth;
    const auto n = G.cols();
    if (n < 1 || E.cols() != n)
      throw Error{ErrorCode::DegenerateAlignment, "no matched people"};

    const Vec mean_e = E.rowwise().mean();
    const Vec mean_g = G.rowwise().mean();
    const Eigen::Matrix<T, 3, Eigen::Dynamic> E0 = E.colwise() - mean_e;
    const Eigen::Matrix<T, 3, Eigen::Dynamic> G0 = G.colwise() - mean_g;
    const T variance_e = E0.squaredNorm() / T(n);
    if (!(variance_e > T(0)))
      throw Error{ErrorCode::DegenerateAlignment,
                  "estimates have zero variance"};

    const Mat covariance = G0 * E0.transpose() / T(n);
    const Eigen::JacobiSVD<Mat> svd{covariance,
                                    Eigen::ComputeFullU | Eigen::ComputeFullV};
    Vec signs = Vec::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < T(0))
      signs(2) = T(-1);

    auto result = Alignment<T>{};
    auto& s = result.transform;
    s.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
    s.scale = svd.singularValues().dot(signs) / variance_e;
    s.translation = mean_g - s.scale * s.rotation * mean_e;
    const auto& sv = svd.singularValues();
    s.degenerate = n < 3 || !(sv(1) > T(1e-12) * sv(0));
    result.aligned = s.apply(E);
    return result;
  }

  template <typename T>
  auto pa_ppds(const MatchedCrowd<T>& crowd) -> T
  {
    const auto alignment = procrustes_align(crowd);
    return ppds_detail(alignment.aligned, crowd.truth).value;
  }

  //! Depth differences within this band count as ties.
  inline constexpr double depth_tie_band = 1e-6;

  //! Percentage of pairs whose depth order (z) agrees.
  template <typename T>
  auto pcod(const MatchedCrowd<T>& crowd) -> T
  {
    const auto n = crowd.size();
    if (n < 2 || crowd.estimates.cols() != n)
      throw Error{ErrorCode::Undefined, "PCOD needs at least two people"};
    auto order = [](T dz) {
      using std::abs;
      return abs(dz) <= T(depth_tie_band) ? 0 : (dz > T(0) ? 1 : -1);
    };
    auto correct = Eigen::Index{0};
    auto pairs = Eigen::Index{0};
    for (auto k = Eigen::Index{0}; k < n; ++k)
      for (auto i = k + 1; i < n; ++i)
      {
        const auto e = order(crowd.estimates(2, k) - crowd.estimates(2, i));
        const auto g = order(crowd.truth(2, k) - crowd.truth(2, i));
        correct += e == g;
        ++pairs;
      }
    return T(100) * T(correct) / T(pairs);
  }

  //! Mean over visible keypoints of exp(-d² / (2 s² k²)).
  template <typename T>
  auto oks(const Eigen::Matrix<T, 2, Eigen::Dynamic>& estimate,
           const Eigen::Matrix<T, 2, Eigen::Dynamic>& truth,
           std::span<const bool> visible, T scale, std::span<const T> falloff)
      -> T
  {
    using std::exp;
    const auto n = truth.cols();
    if (estimate.cols() != n || Eigen::Index(visible.size()) != n ||
        Eigen::Index(falloff.size()) != n)
      throw Error{ErrorCode::Undefined, "keypoint sets do not line up"};
    auto sum = T(0);
    auto count = 0;
    for (auto j = Eigen::Index{0}; j < n; ++j)
    {
      if (!visible[std::size_t(j)])
        continue;
      const T d2 = (estimate.col(j) - truth.col(j)).squaredNorm();
      const T k = falloff[std::size_t(j)];
      sum += exp(-d2 / (T(2) * scale * scale * k * k));
      ++count;
    }
    if (count == 0)
      throw Error{ErrorCode::Undefined, "no visible keypoints"};
    return sum / T(count);
  }

  //! Minimum-cost one-to-one assignment (Hungarian method, O(n³)) on a
  //! rectangular cost matrix. Pairs costing more than `gate` are left
  //! unmatched. Returns for each row the matched column or -1.
  auto assign(const Eigen::MatrixXd& cost, double gate) -> std::vector<int>;

}  // namespace crowdloc
