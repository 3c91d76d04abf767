#pragma once

#include <crowdloc/geometry.hpp>
#include <crowdloc/skeleton.hpp>

#include <span>
#include <vector>


namespace crowdloc {

  //! Ankle and shoulder midpoints of a person assumed to stand upright.
  struct StandingObservation
  {
    Pixeld p_a;
    Pixeld p_s;
    double confidence = 1;
    //! Index of the person in the list handed to select_standing.
    int source = -1;
  };

  struct LossWeights
  {
    double angle = 1.;
    double modulus = 1.;
  };

  struct CalibrationOptions
  {
    //! Ankle-midpoint to shoulder-midpoint length (meters).
    double height_prior = 1.4;
    LossWeights weights;
    //! Distance between the fitted ankle plane and the floor (meters). The
    //! floor is this far below the ankles, i.e. away from the camera.
    double ground_shift = 0.1;
    std::vector<double> focal_multipliers = {0.5, 1., 2., 4.};
    double tolerance = 1e-10;
    int max_evaluations = 10'000;
    bool reweight = true;
  };

  struct CalibrationResult
  {
    CameraIntrinsicsd camera;
    //! Floor plane, after the ground shift.
    GroundPlaned ground;
    //! Plane through the ankle midpoints, as fitted.
    GroundPlaned ankle_plane;
    double residual = 0;
    int iterations = 0;
    std::vector<double> per_observation;
    std::vector<double> weights;
    int observations_used = 0;
    bool converged = false;
    bool degenerate_configuration = false;
  };

  //! Upright, confidently detected people: ankle and shoulder confidences
  //! >= tau, torso within 0.2 of vertical in the image, both feet on the
  //! same row within 0.1 segment lengths, shoulders above ankles.
  auto select_standing(std::span<const KeypointSet> people, double tau)
      -> std::vector<StandingObservation>;

  //! Projection of P_a + h N where P_a is the ankle pixel cut with the plane.
  auto predict_shoulder(const Pixeld& p_a, const CameraIntrinsicsd& K,
                        const GroundPlaned& G, double h) -> Pixeld;

  //! Per-person angle and relative-length discrepancy between the predicted
  //! and observed ankle-to-shoulder segments.
  auto observation_loss(const StandingObservation& obs,
                        const CameraIntrinsicsd& K, const GroundPlaned& G,
                        double h, const LossWeights& weights) -> double;

  //! Mean of observation_loss over all observations.
  auto calibration_loss(const CameraIntrinsicsd& K, const GroundPlaned& G,
                        std::span<const StandingObservation> observations,
                        double h, const LossWeights& weights = {}) -> double;

  //! Fits focal length, normal and offset with the principal point fixed at
  //! the image center, then shifts the plane down to the floor.
  auto calibrate(std::span<const StandingObservation> observations,
                 int image_width, int image_height,
                 const CalibrationOptions& options = {}) -> CalibrationResult;

  //! Unit normal from spherical angles about the z axis.
  auto normal_from_angles(double polar, double azimuth) -> Point3d;

}  // namespace crowdloc
