#pragma once

/**
 * @file lens_io.hpp
 * @brief Lens description files (JSON, one lens per file).
 *
 * Example:
 * {
 *   "schema": "aberforge.lens", "schema_version": 1, "name": "singlet",
 *   "units": {"length": "mm", "pitch": "um", "wavelength": "nm"},
 *   "materials": [{"name": "crown", "nd": 1.5168, "vd": 64.17}],
 *   "surfaces": [{"kind": "stop", "semi_diameter": 6.25, "thickness": 2.0, "material": "air"}, ...],
 *   "stop_index": 0, "image_distance": 48.1, "focal_length": 50.0,
 *   "f_number": 4.0, "half_fov_deg": 10.0,
 *   "sensor": {"pitch_um": 8.0, "resolution": 2048}
 * }
 */

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "aberforge/error.hpp"
#include "aberforge/optics.hpp"

namespace aberforge {

inline constexpr int kLensSchemaVersion = 1;

inline nlohmann::ordered_json lens_to_json(const LensSystem& lens) {
  nlohmann::ordered_json j;
  j["schema"] = "aberforge.lens";
  j["schema_version"] = kLensSchemaVersion;
  j["name"] = lens.name;
  j["units"] = {{"length", "mm"}, {"pitch", "um"}, {"wavelength", "nm"}};
  auto mats = nlohmann::ordered_json::array();
  for (const auto& m : lens.materials) {
    nlohmann::ordered_json jm{{"name", m.name}, {"nd", m.nd}};
    if (std::isfinite(m.vd)) jm["vd"] = m.vd;
    mats.push_back(jm);
  }
  j["materials"] = mats;
  auto surfs = nlohmann::ordered_json::array();
  for (const auto& s : lens.surfaces) {
    nlohmann::ordered_json js;
    js["kind"] = std::string(to_string(s.kind));
    js["curvature"] = s.curvature;
    js["conic"] = s.conic;
    js["aspheric"] = s.aspheric;
    js["semi_diameter"] = s.semi_diameter;
    js["thickness"] = s.thickness;
    js["material"] = s.material;
    surfs.push_back(js);
  }
  j["surfaces"] = surfs;
  j["stop_index"] = lens.stop_index;
  j["image_distance"] = lens.image_distance;
  j["focal_length"] = lens.focal_length;
  j["f_number"] = lens.f_number;
  j["half_fov_deg"] = lens.half_fov_deg;
  if (lens.sensor) {
    j["sensor"] = {{"pitch_um", lens.sensor->pitch_um}, {"resolution", lens.sensor->resolution}};
  } else {
    j["sensor"] = nullptr;
  }
  return j;
}

inline LensSystem lens_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("schema_version")) throw FormatError("lens file missing schema_version");
    const int version = j.at("schema_version").get<int>();
    if (version != kLensSchemaVersion) throw FormatError("unsupported lens schema_version " + std::to_string(version));
    if (j.contains("units")) {
      const auto& u = j.at("units");
      if (u.value("length", "mm") != "mm" || u.value("pitch", "um") != "um" || u.value("wavelength", "nm") != "nm") {
        throw FormatError("lens file units must be mm / um / nm");
      }
    }
    LensSystem lens;
    lens.name = j.value("name", "");
    for (const auto& jm : j.at("materials")) {
      const double vd = jm.contains("vd") ? jm.at("vd").get<double>() : std::numeric_limits<double>::infinity();
      lens.materials.push_back(std::isfinite(vd) ? Material::from_abbe(jm.at("name"), jm.at("nd"), vd)
                                                 : Material::constant(jm.at("name"), jm.at("nd")));
    }
    for (const auto& js : j.at("surfaces")) {
      Surface s;
      s.kind = parse_surface_kind(js.at("kind").get<std::string>());
      s.curvature = js.value("curvature", 0.0);
      s.conic = js.value("conic", 0.0);
      s.aspheric = js.value("aspheric", std::vector<double>{});
      s.semi_diameter = js.at("semi_diameter").get<double>();
      s.thickness = js.at("thickness").get<double>();
      s.material = js.value("material", "air");
      lens.surfaces.push_back(std::move(s));
    }
    lens.stop_index = j.at("stop_index").get<std::size_t>();
    lens.image_distance = j.at("image_distance").get<double>();
    lens.focal_length = j.at("focal_length").get<double>();
    lens.f_number = j.at("f_number").get<double>();
    lens.half_fov_deg = j.at("half_fov_deg").get<double>();
    if (j.contains("sensor") && !j.at("sensor").is_null()) {
      lens.sensor = Sensor{j.at("sensor").at("pitch_um").get<double>(), j.at("sensor").at("resolution").get<int>()};
    }
    validate(lens);
    return lens;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("lens file: ") + e.what());
  }
}

inline std::string serialize_lens(const LensSystem& lens) { return lens_to_json(lens).dump(2) + "\n"; }

inline LensSystem parse_lens(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("lens file is not valid JSON: ") + e.what());
  }
  return lens_from_json(j);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline LensSystem load_lens(const std::string& path) { return parse_lens(read_text_file(path)); }
inline void save_lens(const std::string& path, const LensSystem& lens) { write_text_file(path, serialize_lens(lens)); }

// 64-bit FNV-1a, hex encoded.
inline std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

// Lens identity: hash of the serialized lens file.
inline std::string lens_id(const LensSystem& lens) { return content_hash(serialize_lens(lens)); }

}  // namespace aberforge
