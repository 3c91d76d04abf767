#include <crowdloc/io.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>


namespace crowdloc {

  namespace {

    auto vec(const Pixeld& p) -> Json
    {
      return Json::array({p.x(), p.y()});
    }

    auto vec(const Point3d& P) -> Json
    {
      return Json::array({P.x(), P.y(), P.z()});
    }

    auto pixel(const Json& j) -> Pixeld
    {
      if (!j.is_array() || j.size() != 2)
        throw Error{ErrorCode::ConfigError, "expected [u, v], got " + j.dump()};
      return {j[0].get<double>(), j[1].get<double>()};
    }

    auto point(const Json& j) -> Point3d
    {
      if (!j.is_array() || j.size() != 3)
        throw Error{ErrorCode::ConfigError,
                    "expected [x, y, z], got " + j.dump()};
      return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    }

    auto points(const Json& j) -> PointSetd
    {
      auto out = PointSetd{3, Eigen::Index(j.size())};
      for (auto c = std::size_t{0}; c < j.size(); ++c)
        out.col(Eigen::Index(c)) = point(j[c]);
      return out;
    }

    auto points_json(const PointSetd& P) -> Json
    {
      auto out = Json::array();
      for (auto c = Eigen::Index{0}; c < P.cols(); ++c)
        out.push_back(vec(Point3d(P.col(c))));
      return out;
    }

    // NaN and infinities have no JSON spelling.
    auto number(double x) -> Json
    {
      return std::isfinite(x) ? Json(x) : Json(nullptr);
    }

    auto optional_number(const std::optional<double>& x) -> Json
    {
      return x ? number(*x) : Json(nullptr);
    }

    auto range(const Json& j, const char* key, double& lo, double& hi) -> void
    {
      if (!j.contains(key))
        return;
      const auto& r = j.at(key);
      if (!r.is_array() || r.size() != 2)
        throw Error{ErrorCode::ConfigError,
                    std::string{key} + " must be [min, max]"};
      lo = r[0].get<double>();
      hi = r[1].get<double>();
    }

    auto image_json(int width, int height) -> Json
    {
      return {{"width_px", width}, {"height_px", height}};
    }

    auto read_image(const Json& j, int& width, int& height) -> void
    {
      const auto& image = j.at("image");
      width = image.at("width_px").get<int>();
      height = image.at("height_px").get<int>();
      if (width <= 0 || height <= 0)
        throw Error{ErrorCode::ConfigError, "image dimensions must be positive"};
    }

  }  // namespace

  auto read_json(const std::filesystem::path& path) -> Json
  {
    if (!std::filesystem::exists(path))
      throw Error{ErrorCode::ConfigError,
                  "file not found: " + path.string()};
    auto in = std::ifstream{path};
    if (!in)
      throw Error{ErrorCode::IoError, "cannot open " + path.string()};
    try
    {
      return Json::parse(in);
    }
    catch (const Json::parse_error& e)
    {
      throw Error{ErrorCode::ConfigError,
                  path.string() + ": malformed JSON: " + e.what()};
    }
  }

  auto write_json(const std::filesystem::path& path, const Json& value)
      -> void
  {
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    auto out = std::ofstream{path};
    if (!out)
      throw Error{ErrorCode::IoError, "cannot write " + path.string()};
    out << value.dump(2) << '\n';
    if (!out)
      throw Error{ErrorCode::IoError, "failed writing " + path.string()};
  }

  auto fnv1a(std::string_view bytes) -> std::uint64_t
  {
    auto hash = std::uint64_t{0xcbf29ce484222325ull};
    for (const auto c : bytes)
    {
      hash ^= std::uint8_t(c);
      hash *= 0x100000001b3ull;
    }
    return hash;
  }

  auto digest(const Json& value) -> std::string
  {
    char buffer[17];
    std::snprintf(buffer, sizeof buffer, "%016llx",
                  static_cast<unsigned long long>(fnv1a(value.dump())));
    return buffer;
  }

  auto metadata(const Json& config) -> Json
  {
    return {{"tool", tool_name},
            {"version", tool_version},
            {"config_digest", digest(config)},
            {"rng", "philox4x32-10"},
            {"config", config}};
  }

  auto check_schema(const Json& document, std::string_view schema,
                    const std::string& origin) -> void
  {
    if (!document.is_object() || !document.contains("schema") ||
        document.at("schema") != schema)
      throw Error{ErrorCode::ConfigError,
                  origin + ": expected schema " + std::string{schema}};
  }

  auto camera_from_json(const Json& j) -> CameraIntrinsicsd
  {
    const auto K = CameraIntrinsicsd{j.at("f_px").get<double>(),
                                     j.at("cx_px").get<double>(),
                                     j.at("cy_px").get<double>()};
    if (!(K.f > 0))
      throw Error{ErrorCode::ConfigError, "focal length must be positive"};
    return K;
  }

  auto to_json(const CameraIntrinsicsd& K) -> Json
  {
    return {{"f_px", K.f}, {"cx_px", K.cx}, {"cy_px", K.cy}};
  }

  auto ground_from_json(const Json& j) -> GroundPlaned
  {
    if (j.contains("pitch_deg"))
      return ground_from_pitch_roll(j.at("pitch_deg").get<double>(),
                                    j.value("roll_deg", 0.),
                                    j.at("height_m").get<double>());
    const Point3d N = point(j.at("normal"));
    if (!(N.norm() > 0))
      throw Error{ErrorCode::ConfigError, "ground normal must be non-zero"};
    return GroundPlaned{N, j.at("offset_m").get<double>()};
  }

  auto to_json(const GroundPlaned& G) -> Json
  {
    const auto& N = G.normal();
    const auto polar = std::acos(std::clamp(N.z(), -1., 1.));
    const auto azimuth = std::atan2(N.y(), N.x());
    return {{"normal", vec(N)},
            {"offset_m", G.offset()},
            {"normal_polar_deg", polar * 180 / std::numbers::pi},
            {"normal_azimuth_deg", azimuth * 180 / std::numbers::pi}};
  }

  auto scene_spec_from_json(const Json& j) -> SceneSpec
  {
    auto spec = SceneSpec{};
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("image"))
    {
      read_image(j, spec.image_width, spec.image_height);
      spec.camera.cx = 0.5 * spec.image_width;
      spec.camera.cy = 0.5 * spec.image_height;
    }
    if (j.contains("camera"))
    {
      const auto& c = j.at("camera");
      spec.camera.f = c.at("f_px").get<double>();
      spec.camera.cx = c.value("cx_px", spec.camera.cx);
      spec.camera.cy = c.value("cy_px", spec.camera.cy);
    }
    if (j.contains("ground"))
      spec.ground = ground_from_json(j.at("ground"));
    spec.person_count = j.value("person_count", spec.person_count);
    range(j, "depth_m", spec.depth_min, spec.depth_max);
    range(j, "stature_m", spec.height_min, spec.height_max);
    spec.torso_length = j.value("torso_length_m", spec.torso_length);
    spec.torso_length_jitter =
        j.value("torso_length_jitter", spec.torso_length_jitter);
    spec.ankle_height = j.value("ankle_height_m", spec.ankle_height);
    spec.standing_fraction = j.value("standing_fraction", spec.standing_fraction);
    spec.max_tilt_deg = j.value("max_tilt_deg", spec.max_tilt_deg);
    spec.keypoint_noise = j.value("keypoint_noise_px", spec.keypoint_noise);
    spec.validate();
    return spec;
  }

  auto to_json(const SceneSpec& spec) -> Json
  {
    return {{"schema", schema::scene},
            {"seed", spec.seed},
            {"image", image_json(spec.image_width, spec.image_height)},
            {"camera", to_json(spec.camera)},
            {"ground", to_json(spec.ground)},
            {"person_count", spec.person_count},
            {"depth_m", {spec.depth_min, spec.depth_max}},
            {"stature_m", {spec.height_min, spec.height_max}},
            {"torso_length_m", spec.torso_length},
            {"torso_length_jitter", spec.torso_length_jitter},
            {"ankle_height_m", spec.ankle_height},
            {"standing_fraction", spec.standing_fraction},
            {"max_tilt_deg", spec.max_tilt_deg},
            {"keypoint_noise_px", spec.keypoint_noise}};
  }

  auto render_options_from_json(const Json& j) -> RenderOptions
  {
    auto options = RenderOptions{};
    options.keypoint_noise = j.value("keypoint_noise_px", 0.);
    if (j.contains("render"))
    {
      const auto& r = j.at("render");
      options.noise_torso = r.value("noise_torso", options.noise_torso);
      options.noise_hvip = r.value("noise_hvip", options.noise_hvip);
      options.include_body = r.value("include_body", options.include_body);
    }
    return options;
  }

  auto annotations_from_json(const Json& j) -> AnnotationSet
  {
    auto set = AnnotationSet{};
    read_image(j, set.image_width, set.image_height);

    // Position of each declared joint in our joint order.
    auto order = std::vector<std::size_t>(joint_count);
    for (auto k = std::size_t{0}; k < joint_count; ++k)
      order[k] = k;
    if (j.contains("joint_names"))
    {
      const auto& names = j.at("joint_names");
      if (names.size() != joint_count)
        throw Error{ErrorCode::ConfigError,
                    "joint_names must list all " +
                        std::to_string(joint_count) + " joints"};
      auto seen = std::set<std::size_t>{};
      for (auto k = std::size_t{0}; k < joint_count; ++k)
      {
        const auto name = names[k].get<std::string>();
        const auto index = joint_index(name);
        if (!index)
          throw Error{ErrorCode::ConfigError, "unknown joint name " + name};
        order[k] = *index;
        if (!seen.insert(order[k]).second)
          throw Error{ErrorCode::ConfigError, "duplicate joint name"};
      }
    }

    for (const auto& record : j.at("people"))
    {
      auto person = AnnotatedPerson{};
      if (record.contains("id") && !record.at("id").is_null())
        person.id = record.at("id").get<int>();
      const auto& box = record.at("box");
      if (box.size() != 4)
        throw Error{ErrorCode::ConfigError, "box must be [x, y, w, h]"};
      person.box = {box[0].get<double>(), box[1].get<double>(),
                    box[2].get<double>(), box[3].get<double>()};
      const auto& keypoints = record.at("keypoints");
      if (keypoints.size() != joint_count)
        throw Error{ErrorCode::ConfigError,
                    "each person needs " + std::to_string(joint_count) +
                        " keypoints"};
      for (auto k = std::size_t{0}; k < joint_count; ++k)
      {
        const auto& kp = keypoints[k];
        if (kp.size() != 3)
          throw Error{ErrorCode::ConfigError, "keypoints are [u, v, conf]"};
        person.keypoints[order[k]] = {
            Pixeld{kp[0].get<double>(), kp[1].get<double>()},
            kp[2].get<double>()};
      }
      if (record.contains("torso"))
        person.torso = pixel(record.at("torso"));
      if (record.contains("hvip"))
        person.hvip = pixel(record.at("hvip"));
      if (record.contains("hvip_offset_px"))
        person.hvip_offset = record.at("hvip_offset_px").get<double>();
      if (record.contains("body"))
      {
        const auto& body = record.at("body");
        person.body_points = points(body.at("points_m"));
        person.body_torso = point(body.at("torso_m"));
      }
      set.people.push_back(std::move(person));
    }
    return set;
  }

  auto to_json(const AnnotationSet& set) -> Json
  {
    auto names = Json::array();
    for (const auto& name : joint_names)
      names.push_back(name);
    auto people = Json::array();
    for (const auto& person : set.people)
    {
      auto keypoints = Json::array();
      for (const auto& k : person.keypoints)
        keypoints.push_back({k.p.x(), k.p.y(), k.confidence});
      auto record = Json{
          {"box", {person.box.x, person.box.y, person.box.w, person.box.h}},
          {"keypoints", keypoints}};
      if (person.id)
        record["id"] = *person.id;
      if (person.torso)
        record["torso"] = vec(*person.torso);
      if (person.hvip)
        record["hvip"] = vec(*person.hvip);
      if (person.hvip_offset)
        record["hvip_offset_px"] = *person.hvip_offset;
      if (person.body_points && person.body_torso)
        record["body"] = {{"points_m", points_json(*person.body_points)},
                          {"torso_m", vec(*person.body_torso)}};
      people.push_back(std::move(record));
    }
    return {{"schema", schema::annotations},
            {"image", image_json(set.image_width, set.image_height)},
            {"joint_names", names},
            {"people", people}};
  }

  auto truth_from_json(const Json& j) -> Truth
  {
    auto truth = Truth{};
    read_image(j, truth.image_width, truth.image_height);
    truth.camera = camera_from_json(j.at("camera"));
    truth.ground = ground_from_json(j.at("ground"));
    for (const auto& record : j.at("people"))
      truth.people.push_back({record.at("id").get<int>(),
                              record.at("stance").get<std::string>() ==
                                  "standing",
                              point(record.at("P_t_m")),
                              point(record.at("P_v_m")),
                              record.at("d_m").get<double>()});
    return truth;
  }

  auto to_json(const Truth& truth) -> Json
  {
    auto people = Json::array();
    for (const auto& person : truth.people)
      people.push_back({{"id", person.id},
                        {"stance", person.standing ? "standing" : "tilted"},
                        {"P_t_m", vec(person.P_t)},
                        {"P_v_m", vec(person.P_v)},
                        {"d_m", person.d}});
    return {{"schema", schema::truth},
            {"image", image_json(truth.image_width, truth.image_height)},
            {"camera", to_json(truth.camera)},
            {"ground", to_json(truth.ground)},
            {"people", people}};
  }

  auto crop_params_from_json(const Json& j) -> CropParams
  {
    auto params = CropParams{j.at("h_top_px").get<double>(),
                             j.at("h_bottom_px").get<double>(),
                             j.at("b_upper_px").get<int>(),
                             j.at("b_lower_px").get<int>(),
                             j.at("image_width_px").get<int>(),
                             j.at("image_height_px").get<int>()};
    params.validate();
    return params;
  }

  auto to_json(const CropParams& params) -> Json
  {
    return {{"h_top_px", params.h_top},
            {"h_bottom_px", params.h_bottom},
            {"b_upper_px", params.b_upper},
            {"b_lower_px", params.b_lower},
            {"image_width_px", params.image_width},
            {"image_height_px", params.image_height}};
  }

  auto to_json(const CropLayout& layout) -> Json
  {
    return {{"rows", layout.rows},
            {"ratio", layout.ratio},
            {"sizes_px", layout.sizes},
            {"objective_px", layout.objective}};
  }

  auto patches_from_json(const Json& j) -> std::vector<Patch>
  {
    auto patches = std::vector<Patch>{};
    auto ids = std::set<int>{};
    for (const auto& record : j)
    {
      const auto patch =
          Patch{record.at("id").get<int>(), record.at("x_px").get<int>(),
                record.at("y_px").get<int>(), record.at("size_px").get<int>(),
                record.at("row").get<int>(), record.at("overlap").get<bool>()};
      if (patch.size <= 0)
        throw Error{ErrorCode::ConfigError, "patch size must be positive"};
      if (!ids.insert(patch.id).second)
        throw Error{ErrorCode::ConfigError,
                    "duplicate patch id " + std::to_string(patch.id)};
      patches.push_back(patch);
    }
    return patches;
  }

  auto to_json(std::span<const Patch> patches) -> Json
  {
    auto out = Json::array();
    for (const auto& p : patches)
      out.push_back({{"id", p.id},
                     {"x_px", p.x},
                     {"y_px", p.y},
                     {"size_px", p.size},
                     {"row", p.row},
                     {"overlap", p.overlap}});
    return out;
  }

  auto calibration_options_from_json(const Json& j) -> CalibrationOptions
  {
    auto options = CalibrationOptions{};
    options.height_prior = j.value("height_prior_m", options.height_prior);
    if (j.contains("weights"))
    {
      options.weights.angle =
          j.at("weights").value("angle", options.weights.angle);
      options.weights.modulus =
          j.at("weights").value("modulus", options.weights.modulus);
    }
    options.ground_shift = j.value("ground_shift_m", options.ground_shift);
    options.focal_multipliers =
        j.value("focal_multipliers", options.focal_multipliers);
    options.tolerance = j.value("tolerance", options.tolerance);
    options.max_evaluations = j.value("max_evaluations", options.max_evaluations);
    options.reweight = j.value("reweight", options.reweight);
    if (!(options.height_prior > 0) || options.focal_multipliers.empty() ||
        !(options.weights.angle >= 0) || !(options.weights.modulus >= 0))
      throw Error{ErrorCode::ConfigError, "invalid calibration options"};
    return options;
  }

  auto to_json(const CalibrationOptions& options) -> Json
  {
    return {{"height_prior_m", options.height_prior},
            {"weights",
             {{"angle", options.weights.angle},
              {"modulus", options.weights.modulus}}},
            {"ground_shift_m", options.ground_shift},
            {"focal_multipliers", options.focal_multipliers},
            {"tolerance", options.tolerance},
            {"max_evaluations", options.max_evaluations},
            {"reweight", options.reweight}};
  }

  auto to_json(const CalibrationResult& result) -> Json
  {
    auto per_observation = Json::array();
    for (const auto x : result.per_observation)
      per_observation.push_back(number(x));
    return {{"camera", to_json(result.camera)},
            {"ground", to_json(result.ground)},
            {"ankle_plane", to_json(result.ankle_plane)},
            {"residual", number(result.residual)},
            {"evaluations", result.iterations},
            {"per_observation_loss", per_observation},
            {"weights", result.weights},
            {"observations_used", result.observations_used},
            {"converged", result.converged},
            {"degenerate_configuration", result.degenerate_configuration}};
  }

  auto calibrated_scene_from_json(const Json& j)
      -> std::pair<CameraIntrinsicsd, GroundPlaned>
  {
    const auto& result = j.contains("result") ? j.at("result") : j;
    return {camera_from_json(result.at("camera")),
            ground_from_json(result.at("ground"))};
  }

  auto merge_config_from_json(const Json& j) -> MergeConfig
  {
    auto cfg = MergeConfig{};
    cfg.radius_factor = j.value("radius_factor", cfg.radius_factor);
    cfg.use_3d = j.value("use_3d", cfg.use_3d);
    cfg.use_ids = j.value("use_ids", cfg.use_ids);
    cfg.validate();
    return cfg;
  }

  auto to_json(const MergeConfig& cfg) -> Json
  {
    return {{"radius_factor", cfg.radius_factor}, {"use_3d", cfg.use_3d},
            {"use_ids", cfg.use_ids}};
  }

  auto people_from_json(const Json& records) -> std::vector<LocatedPerson>
  {
    auto people = std::vector<LocatedPerson>{};
    for (const auto& r : records)
    {
      auto person = LocatedPerson{};
      if (r.contains("id") && !r.at("id").is_null())
        person.id = r.at("id").get<int>();
      person.patch_id = r.at("patch").get<int>();
      person.p_t = pixel(r.at("p_t_px"));
      person.p_v = pixel(r.at("p_v_px"));
      person.P_t = point(r.at("P_t_m"));
      person.P_v = point(r.at("P_v_m"));
      person.d = r.at("d_m").get<double>();
      if (r.contains("scale_px") && !r.at("scale_px").is_null())
        person.scale_px = r.at("scale_px").get<double>();
      if (r.contains("penalties"))
      {
        const auto& p = r.at("penalties");
        if (p.contains("ground_normal") && !p.at("ground_normal").is_null())
          person.ground_normal_loss = p.at("ground_normal").get<double>();
        if (p.contains("out_of_bound_m") && !p.at("out_of_bound_m").is_null())
          person.out_of_bound_loss = p.at("out_of_bound_m").get<double>();
      }
      people.push_back(std::move(person));
    }
    return people;
  }

  auto to_json(std::span<const LocatedPerson> people) -> Json
  {
    auto out = Json::array();
    for (const auto& person : people)
    {
      auto record = Json{
          {"id", person.id ? Json(*person.id) : Json(nullptr)},
          {"patch", person.patch_id},
          {"p_t_px", vec(person.p_t)},
          {"p_v_px", vec(person.p_v)},
          {"P_t_m", vec(person.P_t)},
          {"P_v_m", vec(person.P_v)},
          {"d_m", person.d},
          {"penalties",
           {{"ground_normal", optional_number(person.ground_normal_loss)},
            {"out_of_bound_m", optional_number(person.out_of_bound_loss)}}}};
      if (person.scale_px)
        record["scale_px"] = *person.scale_px;
      out.push_back(std::move(record));
    }
    return out;
  }

  auto to_json(const EvaluationReport& report) -> Json
  {
    auto out = Json{{"estimates", report.estimates},
                    {"truth", report.truth},
                    {"matched", report.matched},
                    {"duplicates", report.duplicates},
                    {"matched_by", report.matched_by_id ? "id" : "assignment"},
                    {"precision", report.precision},
                    {"recall", report.recall},
                    {"ppds", optional_number(report.ppds)},
                    {"pa_ppds", optional_number(report.pa_ppds)},
                    {"pcod_percent", optional_number(report.pcod)},
                    {"mean_position_error_m",
                     optional_number(report.mean_position_error)},
                    {"max_position_error_m",
                     optional_number(report.max_position_error)}};
    if (report.camera)
      out["camera"] = {
          {"focal_relative_error", report.camera->focal_relative},
          {"normal_cosine_distance", report.camera->normal_cosine_distance},
          {"normal_angle_error_deg", report.camera->normal_angle_deg},
          {"offset_error_m", report.camera->offset}};
    return out;
  }

  auto to_json(std::span<const AblationRow> rows) -> Json
  {
    auto out = Json::array();
    for (const auto& row : rows)
      out.push_back(
          {{"count", row.count},
           {"runs", row.runs},
           {"failures", row.failures},
           {"mean_normal_cosine_distance",
            number(row.mean_normal_cosine_distance)},
           {"focal_rmse_px", number(row.focal_rmse)},
           {"mean_focal_relative_error", number(row.mean_focal_relative_error)}});
    return out;
  }

  auto pipeline_options_from_json(const Json& j) -> PipelineOptions
  {
    auto options = PipelineOptions{};
    if (j.contains("crop") && j.at("crop") != "auto")
      options.crop = crop_params_from_json(j.at("crop"));
    if (j.contains("calibration"))
    {
      const auto& c = j.at("calibration");
      options.calibration = calibration_options_from_json(c);
      options.confidence_threshold =
          c.value("confidence_threshold", options.confidence_threshold);
      if (c.contains("camera") != c.contains("ground"))
        throw Error{ErrorCode::ConfigError,
                    "fixed calibration needs both camera and ground"};
      if (c.contains("camera"))
      {
        options.camera = camera_from_json(c.at("camera"));
        options.ground = ground_from_json(c.at("ground"));
      }
    }
    if (j.contains("merge"))
      options.merge = merge_config_from_json(j.at("merge"));
    return options;
  }

}  // namespace crowdloc
