#pragma once

#include <crowdloc/calibration.hpp>
#include <crowdloc/cropping.hpp>
#include <crowdloc/hvip.hpp>
#include <crowdloc/merging.hpp>
#include <crowdloc/simulation.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>


namespace crowdloc {

  //! Environment variable overriding the default worker count.
  inline constexpr auto workers_variable = "CROWDLOC_WORKERS";

  //! Worker count from the environment, else the hardware concurrency.
  auto default_workers() -> int;

  //! Runs body(i) for i in [0, count) on up to `workers` threads. Each index
  //! is processed exactly once; results written by index are independent of
  //! the worker count. The first exception (lowest index) is rethrown.
  auto parallel_for(std::size_t count, int workers,
                    const std::function<void(std::size_t)>& body) -> void;

  //! One person as seen from one patch.
  struct PatchObservation
  {
    //! Index into the annotation set.
    int person;
    PersonObservation observation;
  };

  //! Every (person, patch) pair whose patch contains the person's torso
  //! pixel, ordered by person then patch.
  auto observe(const AnnotationSet& annotations,
               std::span<const Patch> patches) -> std::vector<PatchObservation>;

  //! Localizes each observation and evaluates the ground-normal and
  //! out-of-bound penalties when the annotation allows it.
  auto localize(const AnnotationSet& annotations,
                std::span<const PatchObservation> observations,
                std::span<const Patch> patches, const CameraIntrinsicsd& K,
                const GroundPlaned& G, int workers)
      -> std::vector<LocatedPerson>;

  struct PipelineOptions
  {
    //! Estimated from the annotated boxes when absent.
    std::optional<CropParams> crop;
    CalibrationOptions calibration;
    double confidence_threshold = 0.5;
    MergeConfig merge;
    //! Skips calibration when both are given.
    std::optional<CameraIntrinsicsd> camera;
    std::optional<GroundPlaned> ground;
    int workers = 1;
  };

  struct PipelineResult
  {
    CropParams crop;
    CropLayout layout;
    std::vector<Patch> patches;
    std::optional<CalibrationResult> calibration;
    CameraIntrinsicsd camera;
    GroundPlaned ground;
    //! Per-patch detections before merging.
    std::vector<LocatedPerson> detections;
    std::vector<LocatedPerson> people;
  };

  //! Cropping, calibration, localization and merging in order. Errors are
  //! rethrown with the failing stage name prepended.
  auto run_pipeline(const AnnotationSet& annotations,
                    const PipelineOptions& options) -> PipelineResult;

  struct TruthPerson
  {
    int id;
    bool standing;
    Point3d P_t;
    Point3d P_v;
    double d;
  };

  struct Truth
  {
    int image_width = 0;
    int image_height = 0;
    CameraIntrinsicsd camera{1., 0., 0.};
    GroundPlaned ground{Point3d{0., -1., 0.}, 1.};
    std::vector<TruthPerson> people;
  };

  auto truth_of(const Scene& scene) -> Truth;

  struct EvaluationOptions
  {
    //! Largest torso pixel distance accepted when matching without ids.
    double gate_px = 25;
  };

  struct CameraErrors
  {
    double focal_relative;
    double normal_cosine_distance;
    double normal_angle_deg;
    double offset;
  };

  struct EvaluationReport
  {
    int estimates = 0;
    int truth = 0;
    int matched = 0;
    //! Estimates sharing an id with an earlier estimate.
    int duplicates = 0;
    bool matched_by_id = false;
    double precision = 0;
    double recall = 0;
    std::optional<double> ppds;
    std::optional<double> pa_ppds;
    std::optional<double> pcod;
    std::optional<double> mean_position_error;
    std::optional<double> max_position_error;
    std::optional<CameraErrors> camera;
  };

  auto camera_errors(const CameraIntrinsicsd& K, const GroundPlaned& G,
                     const Truth& truth) -> CameraErrors;

  //! Matches by id when every estimate carries one, otherwise by minimum
  //! cost assignment on torso pixels (truth projected with the true camera).
  auto evaluate(std::span<const LocatedPerson> estimates, const Truth& truth,
                const EvaluationOptions& options = {}) -> EvaluationReport;

  struct AblationOptions
  {
    //! Scene template; the seed is replaced per run.
    SceneSpec scene;
    std::vector<int> counts;
    int seeds = 20;
    double noise = 2;
    double confidence_threshold = 0.5;
    CalibrationOptions calibration;
    int workers = 1;
  };

  struct AblationRow
  {
    int count;
    int runs;
    //! Runs without enough standing people or with a failed calibration.
    int failures;
    //! NaN when every run failed.
    double mean_normal_cosine_distance;
    double focal_rmse;
    double mean_focal_relative_error;
  };

  //! Calibration error against the number of standing people used. For a
  //! given seed the people at count n are the first n selected ones, so
  //! crowds are nested across counts.
  auto ablation(const AblationOptions& options) -> std::vector<AblationRow>;

}  // namespace crowdloc
