#pragma once

#include <crowdloc/geometry.hpp>

#include <array>
#include <optional>
#include <string_view>
#include <vector>


namespace crowdloc {

  //! 17-joint layout of the common keypoint benchmark.
  enum class Joint : int
  {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
  };

  inline constexpr auto joint_count = std::size_t{17};

  inline constexpr auto joint_names = std::array<std::string_view, joint_count>{
      "nose",           "left_eye",      "right_eye",      "left_ear",
      "right_ear",      "left_shoulder", "right_shoulder", "left_elbow",
      "right_elbow",    "left_wrist",    "right_wrist",    "left_hip",
      "right_hip",      "left_knee",     "right_knee",     "left_ankle",
      "right_ankle"};

  //! Per-joint falloff σ of the benchmark; OKS uses k = 2σ.
  inline constexpr auto keypoint_sigmas = std::array<double, joint_count>{
      .026, .025, .025, .035, .035, .079, .079, .072, .072,
      .062, .062, .107, .107, .087, .087, .089, .089};

  inline auto joint_index(std::string_view name) -> std::optional<std::size_t>
  {
    for (auto i = std::size_t{0}; i < joint_count; ++i)
      if (joint_names[i] == name)
        return i;
    return std::nullopt;
  }

  struct Keypoint
  {
    Pixeld p = Pixeld::Zero();
    double confidence = 0;
  };

  using KeypointSet = std::array<Keypoint, joint_count>;

  inline auto at(const KeypointSet& k, Joint j) -> const Keypoint&
  {
    return k[std::size_t(j)];
  }

  inline auto midpoint(const KeypointSet& k, Joint a, Joint b) -> Pixeld
  {
    return 0.5 * (at(k, a).p + at(k, b).p);
  }

}  // namespace crowdloc
