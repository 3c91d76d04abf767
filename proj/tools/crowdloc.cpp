#include <crowdloc/io.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <numeric>


using namespace crowdloc;
namespace fs = std::filesystem;

namespace {

  // Exit codes outside the ErrorCode range.
  constexpr auto exit_unexpected = 1;
  constexpr auto exit_usage = 2;

  auto load(const fs::path& path, std::string_view schema) -> Json
  {
    auto doc = read_json(path);
    check_schema(doc, schema, path.string());
    return doc;
  }

  // Output document: schema, provenance and the payload fields.
  auto document(std::string_view schema, const Json& config, Json body) -> Json
  {
    body["schema"] = schema;
    body["meta"] = metadata(config);
    return body;
  }

  // Input files enter the config digest through their content digests.
  auto input(const fs::path& path, const Json& doc) -> Json
  {
    return {{"path", path.filename().string()}, {"digest", digest(doc)}};
  }

  auto keypoints_of(const AnnotationSet& set) -> std::vector<KeypointSet>
  {
    auto out = std::vector<KeypointSet>{};
    for (const auto& person : set.people)
      out.push_back(person.keypoints);
    return out;
  }

  auto boxes_of(const AnnotationSet& set) -> std::vector<Box>
  {
    auto out = std::vector<Box>{};
    for (const auto& person : set.people)
      out.push_back(person.box);
    return out;
  }

  struct SimulateArgs
  {
    fs::path config;
    fs::path out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> count;
    std::optional<double> noise;
    bool no_body = false;
  };

  auto simulate(const SimulateArgs& args) -> void
  {
    const auto config = args.config.empty() ? Json::object()
                                            : read_json(args.config);
    auto spec = scene_spec_from_json(config);
    auto render = render_options_from_json(config);
    if (args.seed)
      spec.seed = *args.seed;
    if (args.count)
      spec.person_count = *args.count;
    if (args.noise)
      spec.keypoint_noise = render.keypoint_noise = *args.noise;
    else
      render.keypoint_noise = spec.keypoint_noise;
    if (args.no_body)
      render.include_body = false;
    spec.validate();

    const auto scene = generate(spec);
    const auto set = render_annotations(scene, render);
    auto resolved = to_json(spec);
    resolved["render"] = {{"noise_torso", render.noise_torso},
                          {"noise_hvip", render.noise_hvip},
                          {"include_body", render.include_body}};

    auto annotations = to_json(set);
    annotations["meta"] = metadata(resolved);
    auto truth = to_json(truth_of(scene));
    truth["meta"] = metadata(resolved);
    write_json(args.out_dir / "annotations.json", annotations);
    write_json(args.out_dir / "truth.json", truth);
    write_json(args.out_dir / "scene.json", resolved);
    std::cout << "simulated " << scene.people.size() << " people into "
              << args.out_dir.string() << '\n';
  }

  struct CropArgs
  {
    fs::path annotations;
    fs::path params;
    fs::path out;
  };

  auto crop(const CropArgs& args) -> void
  {
    if (args.annotations.empty() && args.params.empty())
      throw Error{ErrorCode::ConfigError,
                  "crop needs --annotations or --params"};
    auto config = Json::object();
    auto params = CropParams{};
    auto set = std::optional<AnnotationSet>{};
    if (!args.annotations.empty())
    {
      const auto doc = load(args.annotations, schema::annotations);
      set = annotations_from_json(doc);
      config["annotations"] = input(args.annotations, doc);
    }
    if (!args.params.empty())
    {
      const auto doc = read_json(args.params);
      params = crop_params_from_json(doc.contains("params") ? doc.at("params")
                                                            : doc);
      config["params"] = to_json(params);
    }
    else
    {
      const auto boxes = boxes_of(*set);
      params = estimate_crop_params(boxes, set->image_width, set->image_height);
    }

    const auto layout = solve_layout(params);
    const auto patches = generate_patches(layout, params);
    auto body = Json{{"params", to_json(params)},
                     {"layout", to_json(layout)},
                     {"patches", to_json(patches)}};
    if (set)
    {
      const auto boxes = boxes_of(*set);
      body["cropping_score"] = cropping_score(boxes, patches);
    }
    write_json(args.out, document(schema::patches, config, body));
    std::cout << layout.rows << " rows, " << patches.size() << " patches\n";
  }

  struct CalibrateArgs
  {
    fs::path annotations;
    fs::path config;
    fs::path out;
    double tau = 0.5;
  };

  auto calibrate_command(const CalibrateArgs& args) -> void
  {
    const auto doc = load(args.annotations, schema::annotations);
    const auto set = annotations_from_json(doc);
    const auto options =
        args.config.empty()
            ? CalibrationOptions{}
            : calibration_options_from_json(read_json(args.config));
    const auto standing = select_standing(keypoints_of(set), args.tau);
    const auto result =
        calibrate(standing, set.image_width, set.image_height, options);

    const auto config = Json{{"annotations", input(args.annotations, doc)},
                             {"options", to_json(options)},
                             {"confidence_threshold", args.tau}};
    auto sources = Json::array();
    for (const auto& obs : standing)
      sources.push_back(obs.source);
    write_json(args.out, document(schema::calibration, config,
                                  {{"standing", sources},
                                   {"result", to_json(result)}}));
    std::cout << "f = " << result.camera.f << " px from "
              << result.observations_used << " of " << standing.size()
              << " standing people\n";
  }

  struct LocalizeArgs
  {
    fs::path annotations;
    fs::path calibration;
    fs::path patches;
    fs::path out;
    int workers = 1;
  };

  auto localize_command(const LocalizeArgs& args) -> void
  {
    const auto annotations_doc = load(args.annotations, schema::annotations);
    const auto calibration_doc = load(args.calibration, schema::calibration);
    const auto patches_doc = load(args.patches, schema::patches);
    const auto set = annotations_from_json(annotations_doc);
    const auto [K, G] = calibrated_scene_from_json(calibration_doc);
    const auto patches = patches_from_json(patches_doc.at("patches"));

    const auto observations = observe(set, patches);
    const auto people = localize(set, observations, patches, K, G, args.workers);

    const auto config =
        Json{{"annotations", input(args.annotations, annotations_doc)},
             {"calibration", input(args.calibration, calibration_doc)},
             {"patches", input(args.patches, patches_doc)}};
    write_json(args.out, document(schema::detections, config,
                                  {{"camera", to_json(K)},
                                   {"ground", to_json(G)},
                                   {"patches", to_json(patches)},
                                   {"people", to_json(people)}}));
    std::cout << people.size() << " detections\n";
  }

  struct MergeArgs
  {
    fs::path in;
    fs::path out;
    double radius_factor = 0.5;
    bool use_3d = false;
    bool ignore_ids = false;
  };

  auto merge_command(const MergeArgs& args) -> void
  {
    auto doc = read_json(args.in);
    if (doc.value("schema", "") != schema::reconstruction)
      check_schema(doc, schema::detections, args.in.string());
    const auto people = people_from_json(doc.at("people"));
    const auto patches = patches_from_json(doc.at("patches"));
    const auto cfg = MergeConfig{args.radius_factor, args.use_3d, !args.ignore_ids};
    cfg.validate();
    const auto merged = deduplicate(people, patches, cfg);

    const auto config =
        Json{{"detections", input(args.in, doc)}, {"merge", to_json(cfg)}};
    write_json(args.out, document(schema::reconstruction, config,
                                  {{"camera", doc.at("camera")},
                                   {"ground", doc.at("ground")},
                                   {"patches", doc.at("patches")},
                                   {"people", to_json(merged)}}));
    std::cout << people.size() << " detections merged into " << merged.size()
              << " people\n";
  }

  struct EvaluateArgs
  {
    fs::path reconstruction;
    fs::path truth;
    fs::path out;
    double gate = 25;
  };

  auto report_of(const Json& reconstruction, const Truth& truth, double gate)
      -> EvaluationReport
  {
    const auto people = people_from_json(reconstruction.at("people"));
    auto report = evaluate(people, truth, {gate});
    if (reconstruction.contains("camera") && reconstruction.contains("ground"))
      report.camera = camera_errors(camera_from_json(reconstruction.at("camera")),
                                    ground_from_json(reconstruction.at("ground")),
                                    truth);
    return report;
  }

  auto print(const EvaluationReport& report) -> void
  {
    std::cout << "precision " << report.precision << ", recall "
              << report.recall;
    if (report.ppds)
      std::cout << ", PPDS " << *report.ppds;
    if (report.pa_ppds)
      std::cout << ", PA-PPDS " << *report.pa_ppds;
    if (report.pcod)
      std::cout << ", PCOD " << *report.pcod;
    std::cout << '\n';
  }

  auto evaluate_command(const EvaluateArgs& args) -> void
  {
    const auto reconstruction = read_json(args.reconstruction);
    const auto truth_doc = load(args.truth, schema::truth);
    const auto report =
        report_of(reconstruction, truth_from_json(truth_doc), args.gate);
    const auto config =
        Json{{"reconstruction", input(args.reconstruction, reconstruction)},
             {"truth", input(args.truth, truth_doc)},
             {"gate_px", args.gate}};
    write_json(args.out, document(schema::report, config,
                                  {{"report", to_json(report)}}));
    print(report);
  }

  struct PipelineArgs
  {
    fs::path config;
    fs::path annotations;
    fs::path truth;
    fs::path out_dir;
    int workers = 1;
  };

  auto pipeline_command(const PipelineArgs& args) -> void
  {
    auto config = args.config.empty() ? Json::object() : read_json(args.config);
    const auto base = args.config.empty() ? fs::path{} : args.config.parent_path();
    auto resolve = [&](const fs::path& given, const char* key) -> fs::path {
      if (!given.empty())
        return given;
      if (!config.contains(key))
        return {};
      const auto path = fs::path{config.at(key).get<std::string>()};
      return path.is_absolute() ? path : base / path;
    };
    const auto annotations_path = resolve(args.annotations, "annotations");
    const auto truth_path = resolve(args.truth, "truth");
    if (annotations_path.empty())
      throw Error{ErrorCode::ConfigError,
                  "no annotations file given (--annotations or config)"};

    const auto annotations_doc = load(annotations_path, schema::annotations);
    const auto set = annotations_from_json(annotations_doc);
    auto options = pipeline_options_from_json(config);
    options.workers = args.workers;
    const auto result = run_pipeline(set, options);

    // The digest covers the options and input content, not the paths.
    auto resolved = Json{
        {"annotations", input(annotations_path, annotations_doc)},
        {"crop", options.crop ? to_json(*options.crop) : Json("auto")},
        {"calibration", to_json(options.calibration)},
        {"confidence_threshold", options.confidence_threshold},
        {"merge", to_json(options.merge)}};
    if (options.camera && options.ground)
    {
      resolved["camera"] = to_json(*options.camera);
      resolved["ground"] = to_json(*options.ground);
    }

    auto log = Json{{"crop", {{"params", to_json(result.crop)},
                              {"layout", to_json(result.layout)},
                              {"patch_count", result.patches.size()}}},
                    {"camera", to_json(result.camera)},
                    {"ground", to_json(result.ground)},
                    {"detections", result.detections.size()},
                    {"people", result.people.size()}};
    if (result.calibration)
      log["calibration"] = to_json(*result.calibration);
    const auto reconstruction =
        document(schema::reconstruction, resolved,
                 {{"camera", to_json(result.camera)},
                  {"ground", to_json(result.ground)},
                  {"patches", to_json(result.patches)},
                  {"people", to_json(result.people)}});
    write_json(args.out_dir / "reconstruction.json", reconstruction);
    write_json(args.out_dir / "log.json",
               document(schema::pipeline, resolved, log));
    std::cout << result.people.size() << " people from "
              << result.detections.size() << " detections in "
              << result.patches.size() << " patches\n";

    if (!truth_path.empty())
    {
      const auto truth_doc = load(truth_path, schema::truth);
      const auto report =
          report_of(reconstruction, truth_from_json(truth_doc), 25);
      resolved["truth"] = input(truth_path, truth_doc);
      write_json(args.out_dir / "report.json",
                 document(schema::report, resolved,
                          {{"report", to_json(report)}}));
      print(report);
    }
  }

  struct AblationArgs
  {
    fs::path config;
    fs::path out;
    std::vector<int> counts;
    int seeds = 20;
    double noise = 2;
    double tau = 0.5;
    int workers = 1;
  };

  auto ablation_command(const AblationArgs& args) -> void
  {
    const auto config = args.config.empty() ? Json::object()
                                            : read_json(args.config);
    auto options = AblationOptions{};
    options.scene = scene_spec_from_json(config);
    options.counts = args.counts;
    if (options.counts.empty())
    {
      options.counts.resize(30);
      std::iota(options.counts.begin(), options.counts.end(), 1);
    }
    options.seeds = args.seeds;
    options.noise = args.noise;
    options.confidence_threshold = args.tau;
    if (config.contains("calibration"))
      options.calibration = calibration_options_from_json(config.at("calibration"));
    options.workers = args.workers;
    const auto rows = ablation(options);

    const auto resolved = Json{{"scene", to_json(options.scene)},
                               {"counts", options.counts},
                               {"seeds", options.seeds},
                               {"noise_px", options.noise},
                               {"confidence_threshold", args.tau},
                               {"calibration", to_json(options.calibration)}};
    write_json(args.out,
               document(schema::ablation, resolved, {{"rows", to_json(rows)}}));
    for (const auto& row : rows)
      std::cout << row.count << '\t' << row.mean_normal_cosine_distance << '\t'
                << row.focal_rmse << '\t' << row.failures << '\n';
  }

  auto run(int argc, char** argv) -> int
  {
    auto app = CLI::App{"3D crowd localization from 2D annotations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string{tool_version});

    // Resolved after parsing so a bad environment value is reported as a
    // configuration error rather than at startup.
    auto workers = std::optional<int>{};
    auto add_workers = [&](CLI::App* sub) {
      sub->add_option("--workers", workers,
                      std::string{"Worker threads (default: $"} +
                          workers_variable + " or the hardware concurrency)")
          ->check(CLI::Range(1, 1024));
    };

    auto simulate_args = SimulateArgs{};
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene");
    sim->add_option("--config", simulate_args.config, "Scene spec (JSON)")
        ->check(CLI::ExistingFile);
    sim->add_option("--out-dir", simulate_args.out_dir,
                    "Directory for annotations.json, truth.json, scene.json")
        ->required();
    sim->add_option("--seed", simulate_args.seed, "RNG seed");
    sim->add_option("--count", simulate_args.count, "Number of people");
    sim->add_option("--noise", simulate_args.noise, "Keypoint noise sigma (px)");
    sim->add_flag("--no-body", simulate_args.no_body,
                  "Omit body point clouds from annotations");

    auto crop_args = CropArgs{};
    auto* crp = app.add_subcommand("crop", "Solve the adaptive cropping layout");
    crp->add_option("--annotations", crop_args.annotations,
                    "Annotations; crop parameters are estimated from the boxes");
    crp->add_option("--params", crop_args.params, "Explicit crop parameters");
    crp->add_option("--out", crop_args.out, "Patch file")->required();

    auto calibrate_args = CalibrateArgs{};
    auto* cal = app.add_subcommand(
        "calibrate", "Estimate focal length and floor from standing people");
    cal->add_option("--annotations", calibrate_args.annotations)->required();
    cal->add_option("--config", calibrate_args.config, "Calibration options");
    cal->add_option("--tau", calibrate_args.tau,
                    "Keypoint confidence threshold")
        ->capture_default_str();
    cal->add_option("--out", calibrate_args.out, "Calibration file")->required();

    auto localize_args = LocalizeArgs{};
    auto* loc = app.add_subcommand("localize",
                                   "Lift every person in every patch to 3D");
    loc->add_option("--annotations", localize_args.annotations)->required();
    loc->add_option("--calibration", localize_args.calibration)->required();
    loc->add_option("--patches", localize_args.patches)->required();
    loc->add_option("--out", localize_args.out, "Detections file")->required();
    add_workers(loc);

    auto merge_args = MergeArgs{};
    auto* mrg = app.add_subcommand(
        "merge", "Remove duplicates from overlapping patches");
    mrg->add_option("--in", merge_args.in, "Detections file")->required();
    mrg->add_option("--out", merge_args.out, "Reconstruction file")->required();
    mrg->add_option("--radius-factor", merge_args.radius_factor,
                    "Match radius over person scale")
        ->capture_default_str();
    mrg->add_flag("--use-3d", merge_args.use_3d,
                  "Match on 3D torso distance");
    mrg->add_flag("--ignore-ids", merge_args.ignore_ids,
                  "Let detections with different ids merge");

    auto evaluate_args = EvaluateArgs{};
    auto* evl = app.add_subcommand("evaluate",
                                   "Score a reconstruction against the truth");
    evl->add_option("--reconstruction", evaluate_args.reconstruction)
        ->required();
    evl->add_option("--truth", evaluate_args.truth)->required();
    evl->add_option("--out", evaluate_args.out, "Report file")->required();
    evl->add_option("--gate", evaluate_args.gate,
                    "Largest torso pixel distance for matching without ids")
        ->capture_default_str();

    auto pipeline_args = PipelineArgs{};
    auto* pip = app.add_subcommand(
        "pipeline", "Crop, calibrate, localize and merge in one run");
    pip->add_option("--config", pipeline_args.config, "Pipeline config")
        ->check(CLI::ExistingFile);
    pip->add_option("--annotations", pipeline_args.annotations,
                    "Annotations (overrides the config)");
    pip->add_option("--truth", pipeline_args.truth,
                    "Ground truth; writes report.json");
    pip->add_option("--out-dir", pipeline_args.out_dir)->required();
    add_workers(pip);

    auto ablation_args = AblationArgs{};
    auto* abl = app.add_subcommand(
        "ablation", "Calibration error against the number of people");
    abl->add_option("--config", ablation_args.config, "Scene spec template")
        ->check(CLI::ExistingFile);
    abl->add_option("--out", ablation_args.out, "Table file")->required();
    abl->add_option("--counts", ablation_args.counts,
                    "Person counts (default 1 to 30)");
    abl->add_option("--seeds", ablation_args.seeds)->capture_default_str();
    abl->add_option("--noise", ablation_args.noise, "Keypoint noise sigma (px)")
        ->capture_default_str();
    abl->add_option("--tau", ablation_args.tau)->capture_default_str();
    add_workers(abl);

    try
    {
      app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
      const auto code = app.exit(e);
      return code == 0 ? 0 : exit_usage;
    }

    const auto worker_count = workers ? *workers : default_workers();
    if (*sim)
      simulate(simulate_args);
    else if (*crp)
      crop(crop_args);
    else if (*cal)
      calibrate_command(calibrate_args);
    else if (*loc)
    {
      localize_args.workers = worker_count;
      localize_command(localize_args);
    }
    else if (*mrg)
      merge_command(merge_args);
    else if (*evl)
      evaluate_command(evaluate_args);
    else if (*pip)
    {
      pipeline_args.workers = worker_count;
      pipeline_command(pipeline_args);
    }
    else if (*abl)
    {
      ablation_args.workers = worker_count;
      ablation_command(ablation_args);
    }
    return 0;
  }

}  // namespace

auto main(int argc, char** argv) -> int
{
  try
  {
    return run(argc, argv);
  }
  catch (const Error& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return int(e.code());
  }
  catch (const Json::exception& e)
  {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return int(ErrorCode::ConfigError);
  }
  catch (const fs::filesystem_error& e)
  {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return int(ErrorCode::IoError);
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return exit_unexpected;
  }
}
