#pragma once

#include <crowdloc/cropping.hpp>
#include <crowdloc/hvip.hpp>

#include <span>
#include <vector>


namespace crowdloc {

  struct MergeConfig
  {
    //! Match radius as a multiple of the larger per-person scale.
    double radius_factor = 0.5;
    //! Match on 3D torso distance (scale: torso height d) instead of pixels.
    bool use_3d = false;
    //! Detections carrying different annotated ids never merge.
    bool use_ids = true;

    auto validate() const -> void
    {
      if (!(radius_factor > 0))
        throw Error{ErrorCode::ConfigError, "radius factor must be positive"};
    }
  };

  //! Indices into the input list, one vector per cluster.
  using Clusters = std::vector<std::vector<int>>;

  //! Pixel scale of a person: the annotated scale when present, otherwise
  //! the torso-to-HVIP segment length.
  auto person_scale(const LocatedPerson& person) -> double;

  //! Greedy agglomeration of detections from different patches, closest
  //! pairs first. Two clusters never merge when they share a patch, nor,
  //! with use_ids, when they carry different ids.
  auto match_duplicates(std::span<const LocatedPerson> people,
                        const MergeConfig& cfg) -> Clusters;

  //! Keeps, per cluster, the detection whose torso pixel lies farthest from
  //! its patch border; ties go to the larger patch.
  auto merge(std::span<const LocatedPerson> people, const Clusters& clusters,
             std::span<const Patch> patches) -> std::vector<LocatedPerson>;

  //! match_duplicates + merge repeated until nothing changes.
  auto deduplicate(std::span<const LocatedPerson> people,
                   std::span<const Patch> patches, const MergeConfig& cfg)
      -> std::vector<LocatedPerson>;

}  // namespace crowdloc
