#include <crowdloc/metrics.hpp>
#include <crowdloc/pipeline.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>


namespace crowdloc {

  namespace {

    auto torso_pixel(const AnnotatedPerson& person) -> Pixeld
    {
      if (person.torso)
        return *person.torso;
      const auto& k = person.keypoints;
      return 0.5 * (midpoint(k, Joint::LeftShoulder, Joint::RightShoulder) +
                    midpoint(k, Joint::LeftHip, Joint::RightHip));
    }

    template <typename F>
    auto stage(const char* name, F&& f)
    {
      try
      {
        return f();
      }
      catch (const Error& e)
      {
        throw Error{e.code(), std::string{name} + ": " + e.message()};
      }
    }

    // Shoulder and ankle midpoints cut with the vertical plane through the
    // torso center that faces the camera.
    auto ground_normal_penalty(const AnnotatedPerson& person,
                               const LocatedPerson& located,
                               const CameraIntrinsicsd& K,
                               const GroundPlaned& G) -> std::optional<double>
    {
      const auto& k = person.keypoints;
      for (const auto j : {Joint::LeftShoulder, Joint::RightShoulder,
                           Joint::LeftAnkle, Joint::RightAnkle})
        if (!(at(k, j).confidence > 0))
          return std::nullopt;
      const Pixeld p_s = midpoint(k, Joint::LeftShoulder, Joint::RightShoulder);
      const Pixeld p_a = midpoint(k, Joint::LeftAnkle, Joint::RightAnkle);
      try
      {
        const Point3d P_s = body_plane_proxy(p_s, located.P_t, K, G.normal());
        const Point3d P_a = body_plane_proxy(p_a, located.P_t, K, G.normal());
        return ground_normal_loss(P_s, P_a, G.normal());
      }
      catch (const Error&)
      {
        return std::nullopt;
      }
    }

  }  // namespace

  auto default_workers() -> int
  {
    if (const auto* value = std::getenv(workers_variable))
    {
      char* end = nullptr;
      const auto parsed = std::strtol(value, &end, 10);
      if (end == value || *end != '\0' || parsed < 1 || parsed > 1024)
        throw Error{ErrorCode::ConfigError,
                    std::string{workers_variable} +
                        " must be an integer in [1, 1024], got '" + value +
                        "'"};
      return int(parsed);
    }
    return int(std::max(1u, std::thread::hardware_concurrency()));
  }

  auto parallel_for(std::size_t count, int workers,
                    const std::function<void(std::size_t)>& body) -> void
  {
    if (workers < 1)
      throw Error{ErrorCode::ConfigError, "worker count must be positive"};
    const auto threads = std::min<std::size_t>(std::size_t(workers), count);
    if (threads <= 1)
    {
      for (auto i = std::size_t{0}; i < count; ++i)
        body(i);
      return;
    }

    auto next = std::atomic<std::size_t>{0};
    auto mutex = std::mutex{};
    auto failed_at = std::numeric_limits<std::size_t>::max();
    auto failure = std::exception_ptr{};
    auto run = [&] {
      for (auto i = next++; i < count; i = next++)
      {
        try
        {
          body(i);
        }
        catch (...)
        {
          const auto lock = std::scoped_lock{mutex};
          if (i < failed_at)
          {
            failed_at = i;
            failure = std::current_exception();
          }
        }
      }
    };
    auto pool = std::vector<std::jthread>{};
    for (auto t = std::size_t{0}; t < threads; ++t)
      pool.emplace_back(run);
    pool.clear();
    if (failure)
      std::rethrow_exception(failure);
  }

  auto observe(const AnnotationSet& annotations,
               std::span<const Patch> patches) -> std::vector<PatchObservation>
  {
    auto out = std::vector<PatchObservation>{};
    for (auto i = std::size_t{0}; i < annotations.people.size(); ++i)
    {
      const auto& person = annotations.people[i];
      if (!person.hvip_offset && !person.hvip)
        throw Error{ErrorCode::ObservationInvalid,
                    "person " + std::to_string(i) + " has no HVIP annotation"};
      const Pixeld p_t = torso_pixel(person);
      for (const auto& patch : patches)
      {
        if (!patch.contains(p_t))
          continue;
        auto obs = PersonObservation{};
        obs.patch_id = patch.id;
        obs.p_t_local = global_to_local(p_t, patch);
        if (person.hvip_offset)
          obs.hvip_offset = person.hvip_offset;
        else
          obs.p_v_local = global_to_local(*person.hvip, patch);
        obs.validate();
        out.push_back({int(i), obs});
      }
    }
    return out;
  }

  auto localize(const AnnotationSet& annotations,
                std::span<const PatchObservation> observations,
                std::span<const Patch> patches, const CameraIntrinsicsd& K,
                const GroundPlaned& G, int workers)
      -> std::vector<LocatedPerson>
  {
    auto patch_by_id = std::map<int, const Patch*>{};
    for (const auto& p : patches)
      patch_by_id[p.id] = &p;

    auto out = std::vector<LocatedPerson>(observations.size());
    parallel_for(observations.size(), workers, [&](std::size_t i) {
      const auto& item = observations[i];
      const auto it = patch_by_id.find(item.observation.patch_id);
      if (it == patch_by_id.end())
        throw Error{ErrorCode::ConfigError,
                    "observation refers to unknown patch " +
                        std::to_string(item.observation.patch_id)};
      const auto& person = annotations.people.at(std::size_t(item.person));

      auto located = locate(item.observation, *it->second, K, G);
      located.id = person.id;
      located.ground_normal_loss =
          ground_normal_penalty(person, located, K, G);
      if (person.body_points && person.body_torso)
      {
        auto body = place_body(*person.body_points, *person.body_torso,
                               located.P_t);
        located.out_of_bound_loss = out_of_bound_loss(body, G);
        located.body_points = std::move(body);
      }
      out[i] = std::move(located);
    });
    return out;
  }

  auto run_pipeline(const AnnotationSet& annotations,
                    const PipelineOptions& options) -> PipelineResult
  {
    auto result = PipelineResult{};
    const auto W = annotations.image_width;
    const auto H = annotations.image_height;

    result.crop = stage("crop", [&] {
      if (options.crop)
      {
        options.crop->validate();
        return *options.crop;
      }
      auto boxes = std::vector<Box>{};
      for (const auto& person : annotations.people)
        boxes.push_back(person.box);
      return estimate_crop_params(boxes, W, H);
    });
    result.layout = stage("crop", [&] { return solve_layout(result.crop); });
    result.patches =
        stage("crop", [&] { return generate_patches(result.layout, result.crop); });

    if (options.camera && options.ground)
    {
      result.camera = *options.camera;
      result.ground = *options.ground;
    }
    else
    {
      result.calibration = stage("calibrate", [&] {
        auto keypoints = std::vector<KeypointSet>{};
        for (const auto& person : annotations.people)
          keypoints.push_back(person.keypoints);
        const auto standing =
            select_standing(keypoints, options.confidence_threshold);
        return calibrate(standing, W, H, options.calibration);
      });
      result.camera = result.calibration->camera;
      result.ground = result.calibration->ground;
    }

    result.detections = stage("localize", [&] {
      const auto observations = observe(annotations, result.patches);
      return localize(annotations, observations, result.patches,
                      result.camera, result.ground, options.workers);
    });
    result.people = stage("merge", [&] {
      return deduplicate(result.detections, result.patches, options.merge);
    });
    return result;
  }

  auto truth_of(const Scene& scene) -> Truth
  {
    auto truth = Truth{};
    truth.image_width = scene.spec.image_width;
    truth.image_height = scene.spec.image_height;
    truth.camera = scene.spec.camera;
    truth.ground = scene.spec.ground;
    for (const auto& person : scene.people)
      truth.people.push_back({person.id, person.stance == Stance::Standing,
                              person.P_t, person.P_v, person.d});
    return truth;
  }

  auto camera_errors(const CameraIntrinsicsd& K, const GroundPlaned& G,
                     const Truth& truth) -> CameraErrors
  {
    const auto cosine =
        std::clamp(G.normal().dot(truth.ground.normal()), -1., 1.);
    return {std::abs(K.f - truth.camera.f) / truth.camera.f, 1 - cosine,
            std::acos(cosine) * 180 / std::numbers::pi,
            G.offset() - truth.ground.offset()};
  }

  auto evaluate(std::span<const LocatedPerson> estimates, const Truth& truth,
                const EvaluationOptions& options) -> EvaluationReport
  {
    auto report = EvaluationReport{};
    report.estimates = int(estimates.size());
    report.truth = int(truth.people.size());

    // (estimate, truth) index pairs.
    auto pairs = std::vector<std::pair<std::size_t, std::size_t>>{};
    report.matched_by_id =
        !estimates.empty() &&
        std::all_of(estimates.begin(), estimates.end(),
                    [](const auto& e) { return e.id.has_value(); });
    if (report.matched_by_id)
    {
      auto index_of = std::map<int, std::size_t>{};
      for (auto j = std::size_t{0}; j < truth.people.size(); ++j)
        index_of[truth.people[j].id] = j;
      auto seen = std::set<int>{};
      for (auto i = std::size_t{0}; i < estimates.size(); ++i)
      {
        const auto id = *estimates[i].id;
        if (!seen.insert(id).second)
        {
          ++report.duplicates;
          continue;
        }
        if (const auto it = index_of.find(id); it != index_of.end())
          pairs.emplace_back(i, it->second);
      }
    }
    else if (!estimates.empty() && !truth.people.empty())
    {
      auto cost = Eigen::MatrixXd{Eigen::Index(estimates.size()),
                                  Eigen::Index(truth.people.size())};
      for (auto j = std::size_t{0}; j < truth.people.size(); ++j)
      {
        const Pixeld p = project(truth.people[j].P_t, truth.camera);
        for (auto i = std::size_t{0}; i < estimates.size(); ++i)
          cost(Eigen::Index(i), Eigen::Index(j)) = (estimates[i].p_t - p).norm();
      }
      const auto assignment = assign(cost, options.gate_px);
      for (auto i = std::size_t{0}; i < assignment.size(); ++i)
        if (assignment[i] >= 0)
          pairs.emplace_back(i, std::size_t(assignment[i]));
    }

    report.matched = int(pairs.size());
    report.precision =
        estimates.empty() ? 0 : double(pairs.size()) / double(estimates.size());
    report.recall = truth.people.empty()
                        ? 0
                        : double(pairs.size()) / double(truth.people.size());

    auto crowd = MatchedCrowd<double>{};
    crowd.estimates.resize(3, Eigen::Index(pairs.size()));
    crowd.truth.resize(3, Eigen::Index(pairs.size()));
    for (auto k = std::size_t{0}; k < pairs.size(); ++k)
    {
      crowd.estimates.col(Eigen::Index(k)) = estimates[pairs[k].first].P_t;
      crowd.truth.col(Eigen::Index(k)) = truth.people[pairs[k].second].P_t;
    }
    if (!pairs.empty())
    {
      const Eigen::RowVectorXd errors =
          (crowd.estimates - crowd.truth).colwise().norm();
      report.mean_position_error = errors.mean();
      report.max_position_error = errors.maxCoeff();
    }
    auto optional_metric = [](auto&& f) -> std::optional<double> {
      try
      {
        return f();
      }
      catch (const Error&)
      {
        return std::nullopt;
      }
    };
    report.ppds = optional_metric([&] { return ppds(crowd); });
    report.pa_ppds = optional_metric([&] { return pa_ppds(crowd); });
    report.pcod = optional_metric([&] { return pcod(crowd); });
    return report;
  }

  auto ablation(const AblationOptions& options) -> std::vector<AblationRow>
  {
    if (options.counts.empty() || options.seeds < 1)
      throw Error{ErrorCode::ConfigError,
                  "ablation needs at least one count and one seed"};
    const auto largest =
        *std::max_element(options.counts.begin(), options.counts.end());
    if (*std::min_element(options.counts.begin(), options.counts.end()) < 1)
      throw Error{ErrorCode::ConfigError, "person counts must be positive"};

    // Standing observations per seed, drawn from one scene.
    auto observations =
        std::vector<std::vector<StandingObservation>>(std::size_t(options.seeds));
    auto scene_spec = options.scene;
    parallel_for(observations.size(), options.workers, [&](std::size_t s) {
      auto spec = scene_spec;
      spec.seed = std::uint64_t(s + 1);
      // Enough people that `largest` usually survive the standing filter.
      spec.person_count = std::max(spec.person_count, 2 * largest);
      const auto scene = generate(spec);
      const auto set = render_annotations(
          scene, RenderOptions{options.noise, false, false, false});
      auto keypoints = std::vector<KeypointSet>{};
      for (const auto& person : set.people)
        keypoints.push_back(person.keypoints);
      observations[s] = select_standing(keypoints, options.confidence_threshold);
    });

    struct Outcome
    {
      bool ok = false;
      double cosine_distance = 0;
      double focal_error = 0;
    };
    const auto runs = options.counts.size() * std::size_t(options.seeds);
    auto outcomes = std::vector<Outcome>(runs);
    const auto W = scene_spec.image_width;
    const auto H = scene_spec.image_height;
    parallel_for(runs, options.workers, [&](std::size_t r) {
      const auto count = std::size_t(options.counts[r / std::size_t(options.seeds)]);
      const auto& all = observations[r % std::size_t(options.seeds)];
      if (all.size() < count)
        return;
      try
      {
        const auto result = calibrate(
            std::span{all}.first(count), W, H, options.calibration);
        outcomes[r] = {true,
                       1 - result.ground.normal().dot(scene_spec.ground.normal()),
                       result.camera.f - scene_spec.camera.f};
      }
      catch (const Error&)
      {
      }
    });

    auto rows = std::vector<AblationRow>{};
    for (auto c = std::size_t{0}; c < options.counts.size(); ++c)
    {
      auto row = AblationRow{options.counts[c], options.seeds, 0, 0, 0, 0};
      auto ok = 0;
      for (auto s = std::size_t{0}; s < std::size_t(options.seeds); ++s)
      {
        const auto& o = outcomes[c * std::size_t(options.seeds) + s];
        if (!o.ok)
        {
          ++row.failures;
          continue;
        }
        ++ok;
        row.mean_normal_cosine_distance += o.cosine_distance;
        row.focal_rmse += o.focal_error * o.focal_error;
        row.mean_focal_relative_error +=
            std::abs(o.focal_error) / scene_spec.camera.f;
      }
      if (ok == 0)
      {
        const auto nan = std::numeric_limits<double>::quiet_NaN();
        row.mean_normal_cosine_distance = row.focal_rmse =
            row.mean_focal_relative_error = nan;
      }
      else
      {
        row.mean_normal_cosine_distance /= ok;
        row.focal_rmse = std::sqrt(row.focal_rmse / ok);
        row.mean_focal_relative_error /= ok;
      }
      rows.push_back(row);
    }
    return rows;
  }

}  // namespace crowdloc
