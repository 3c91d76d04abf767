#pragma once

#include <crowdloc/pipeline.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>


namespace crowdloc {

  using Json = nlohmann::json;

  inline constexpr auto tool_name = "crowdloc";
  inline constexpr auto tool_version = "0.1.0";

  //! Reads and parses a JSON file. Missing files raise ConfigError naming the
  //! path, unreadable ones IoError, malformed ones ConfigError.
  auto read_json(const std::filesystem::path& path) -> Json;

  //! Writes `value` indented by two spaces with a trailing newline.
  auto write_json(const std::filesystem::path& path, const Json& value)
      -> void;

  //! 64-bit FNV-1a.
  auto fnv1a(std::string_view bytes) -> std::uint64_t;

  //! Hex FNV-1a digest of the compact serialization (keys sorted).
  auto digest(const Json& value) -> std::string;

  //! Provenance block embedded in every output file.
  auto metadata(const Json& config) -> Json;

  //! Checks the "schema" field against the expected name.
  auto check_schema(const Json& document, std::string_view schema,
                    const std::string& origin) -> void;

  namespace schema {
    inline constexpr auto scene = "crowdloc.scene/1";
    inline constexpr auto annotations = "crowdloc.annotations/1";
    inline constexpr auto truth = "crowdloc.truth/1";
    inline constexpr auto patches = "crowdloc.patches/1";
    inline constexpr auto calibration = "crowdloc.calibration/1";
    inline constexpr auto detections = "crowdloc.detections/1";
    inline constexpr auto reconstruction = "crowdloc.reconstruction/1";
    inline constexpr auto report = "crowdloc.report/1";
    inline constexpr auto pipeline = "crowdloc.pipeline/1";
    inline constexpr auto ablation = "crowdloc.ablation/1";
  }  // namespace schema

  //! Scene spec with defaults for absent fields. The floor is given either
  //! as {normal, offset} or as {pitch_deg, roll_deg, height}.
  auto scene_spec_from_json(const Json& j) -> SceneSpec;
  auto to_json(const SceneSpec& spec) -> Json;
  auto render_options_from_json(const Json& j) -> RenderOptions;

  auto camera_from_json(const Json& j) -> CameraIntrinsicsd;
  auto to_json(const CameraIntrinsicsd& K) -> Json;
  auto ground_from_json(const Json& j) -> GroundPlaned;
  auto to_json(const GroundPlaned& G) -> Json;

  auto annotations_from_json(const Json& j) -> AnnotationSet;
  auto to_json(const AnnotationSet& set) -> Json;

  auto truth_from_json(const Json& j) -> Truth;
  auto to_json(const Truth& truth) -> Json;

  auto crop_params_from_json(const Json& j) -> CropParams;
  auto to_json(const CropParams& params) -> Json;
  auto to_json(const CropLayout& layout) -> Json;
  auto patches_from_json(const Json& j) -> std::vector<Patch>;
  auto to_json(std::span<const Patch> patches) -> Json;

  auto calibration_options_from_json(const Json& j) -> CalibrationOptions;
  auto to_json(const CalibrationOptions& options) -> Json;
  auto to_json(const CalibrationResult& result) -> Json;
  //! Camera and floor from a calibration document.
  auto calibrated_scene_from_json(const Json& j)
      -> std::pair<CameraIntrinsicsd, GroundPlaned>;

  auto merge_config_from_json(const Json& j) -> MergeConfig;
  auto to_json(const MergeConfig& cfg) -> Json;

  //! Reconstruction records: pixels in "_px", meters in "_m".
  auto people_from_json(const Json& records) -> std::vector<LocatedPerson>;
  auto to_json(std::span<const LocatedPerson> people) -> Json;

  auto to_json(const EvaluationReport& report) -> Json;
  auto to_json(std::span<const AblationRow> rows) -> Json;

  //! Pipeline options from a config document; relative paths are left to
  //! the caller.
  auto pipeline_options_from_json(const Json& j) -> PipelineOptions;

}  // namespace crowdloc
