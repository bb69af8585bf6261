#pragma once

// Calibrated measurement scene: two-sphere specular eye, pinhole cameras and
// a planar screen. Geometry is read from JSON, never estimated.

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deflect_gaze/geometry.hpp"

namespace deflect_gaze {

enum class Region : std::uint8_t { None = 0, Cornea = 1, Sclera = 2 };

struct EyeModel {
  Vec3 sclera_center = Vec3::Zero();
  UnitVec3 optical_axis;
  double sclera_radius = 12.0;
  double cornea_radius = 7.8;
  double cornea_offset = 5.6;
  double cornea_aperture_deg = 40.0;

  Vec3 cornea_center() const { return sclera_center + cornea_offset * optical_axis.vec(); }

  /// Name of the first violated invariant, if any.
  std::optional<std::string> violated_invariant() const {
    if (!sclera_center.allFinite()) return "sclera_center finite";
    if (std::abs(optical_axis.vec().norm() - 1.0) > 1e-9) return "optical_axis unit";
    if (!(cornea_radius > 0.0)) return "cornea_radius > 0";
    if (!(cornea_radius < sclera_radius)) return "cornea_radius < sclera_radius";
    if (!(cornea_offset > 0.0)) return "cornea_offset > 0";
    if (!(cornea_offset + cornea_radius > sclera_radius)) return "cornea_offset + cornea_radius > sclera_radius";
    if (!(cornea_aperture_deg > 0.0 && cornea_aperture_deg < 90.0)) return "0 < cornea_aperture < 90";
    return std::nullopt;
  }
};

struct CameraModel {
  RigidPose pose;  // camera-to-world; looks along local +z, x right, y down
  double focal_length = 230.0;
  std::array<double, 2> principal_point{63.5, 63.5};
  std::array<int, 2> resolution{128, 128};

  int width() const { return resolution[0]; }
  int height() const { return resolution[1]; }
  Vec3 center() const { return pose.translation; }

  Ray pixel_ray(double px, double py) const {
    const Vec3 local((px - principal_point[0]) / focal_length, (py - principal_point[1]) / focal_length, 1.0);
    return Ray{pose.translation, UnitVec3::normalize(pose.apply_dir(local))};
  }

  /// Sub-pixel image coordinates of a world point, none if behind the camera.
  std::optional<std::array<double, 2>> project(const Vec3& world) const {
    const Vec3 local = pose.inverse_apply(world);
    if (!(local.z() > kGeomEps)) return std::nullopt;
    return std::array<double, 2>{focal_length * local.x() / local.z() + principal_point[0],
                                 focal_length * local.y() / local.z() + principal_point[1]};
  }
};

/// Planar display. Local z = 0 is the panel with local +z facing the eye and
/// the local origin at the panel center; screen pixel (u, v) sits at
/// ((u - W/2) * pitch, (v - H/2) * pitch).
struct ScreenModel {
  RigidPose pose;
  std::array<int, 2> resolution{600, 340};
  double pixel_pitch = 0.2;

  int width() const { return resolution[0]; }
  int height() const { return resolution[1]; }
  Vec3 normal() const { return pose.rotation.col(2); }

  Vec3 to_world(double u, double v) const {
    return pose.apply(Vec3((u - 0.5 * width()) * pixel_pitch, (v - 0.5 * height()) * pixel_pitch, 0.0));
  }

  /// Screen pixel coordinates of a world point assumed to lie on the panel plane.
  std::array<double, 2> to_pixel(const Vec3& world) const {
    const Vec3 local = pose.inverse_apply(world);
    return {local.x() / pixel_pitch + 0.5 * width(), local.y() / pixel_pitch + 0.5 * height()};
  }

  bool contains(double u, double v) const { return u >= 0.0 && u < width() && v >= 0.0 && v < height(); }
};

struct SceneConfig {
  ScreenModel screen;
  std::vector<CameraModel> cameras;
  EyeModel eye;
};

struct SurfaceHit {
  Vec3 point;
  UnitVec3 normal;
  Region region = Region::None;
  double t = 0.0;
};

/// Nearest intersection with the composite cornea/sclera surface. The cornea
/// cap (angle at the cornea center <= aperture) replaces the sclera cap.
inline std::optional<SurfaceHit> eye_surface_hit(const EyeModel& eye, const Ray& ray) {
  const Vec3 cc = eye.cornea_center();
  const double cos_ap = std::cos(deg2rad(eye.cornea_aperture_deg));
  const Vec3& axis = eye.optical_axis.vec();

  std::optional<SurfaceHit> best;
  auto consider = [&](double t, Region region) {
    if (!(t > kGeomEps)) return;
    if (best && t >= best->t) return;
    const Vec3 p = ray.at(t);
    const Vec3 rel = p - cc;
    const double rel_norm = rel.norm();
    const bool in_cap = rel_norm > 0.0 && rel.dot(axis) >= cos_ap * rel_norm;
    if (region == Region::Cornea && !in_cap) return;
    if (region == Region::Sclera && in_cap) return;
    const Vec3& center = (region == Region::Cornea) ? cc : eye.sclera_center;
    best = SurfaceHit{p, UnitVec3::normalize(p - center), region, t};
  };
  if (auto roots = ray_sphere_roots(ray, cc, eye.cornea_radius)) {
    consider(roots->first, Region::Cornea);
    consider(roots->second, Region::Cornea);
  }
  if (auto roots = ray_sphere_roots(ray, eye.sclera_center, eye.sclera_radius)) {
    consider(roots->first, Region::Sclera);
    consider(roots->second, Region::Sclera);
  }
  return best;
}

/// Rotates the optical axis by `angle_deg` about `axis` through the fixed
/// pivot sclera_center.
inline EyeModel rotate_eye_about(const EyeModel& eye, const UnitVec3& axis, double angle_deg) {
  EyeModel out = eye;
  out.optical_axis = UnitVec3::normalize(axis_angle(axis, deg2rad(angle_deg)) * eye.optical_axis.vec());
  return out;
}

inline const UnitVec3& world_up() {
  static const UnitVec3 up = UnitVec3::assume_unit(Vec3::UnitY());
  return up;
}

/// Azimuth about world up (+y, positive turns +z toward +x), then elevation
/// about the rotated right axis (positive raises the axis toward +y).
inline Mat3 eye_rotation(double azimuth_deg, double elevation_deg) {
  const Mat3 az = axis_angle(world_up(), deg2rad(azimuth_deg));
  const Mat3 el = axis_angle(UnitVec3::assume_unit(Vec3::UnitX()), -deg2rad(elevation_deg));
  return az * el;
}

inline EyeModel rotate_eye(const EyeModel& eye, double azimuth_deg, double elevation_deg) {
  if (azimuth_deg == 0.0 && elevation_deg == 0.0) return eye;
  EyeModel out = eye;
  out.optical_axis = UnitVec3::normalize(eye_rotation(azimuth_deg, elevation_deg) * eye.optical_axis.vec());
  return out;
}

// ---------------------------------------------------------------------------
// Construction helpers and the shipped default scene.

inline RigidPose look_at(const Vec3& eye_pos, const Vec3& target, const Vec3& up_hint) {
  const Vec3 z = (target - eye_pos).normalized();
  Vec3 x = z.cross(up_hint);
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  RigidPose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye_pos;
  return pose;
}

/// VR-headset scale: eye at the origin looking along +z, a 120 x 68 mm panel
/// about 35 mm in front tilted 30 degrees, and two cameras 50 mm away below
/// the panel separated by a 15 degree baseline.
inline SceneConfig default_scene() {
  SceneConfig scene;
  scene.eye = EyeModel{};

  const double tilt = deg2rad(30.0);
  // Local z is the panel normal facing the eye; local x runs along world x.
  const Vec3 facing(0.0, -std::sin(tilt), -std::cos(tilt));
  scene.screen.pose.rotation.col(0) = Vec3::UnitX();
  scene.screen.pose.rotation.col(1) = facing.cross(Vec3::UnitX());
  scene.screen.pose.rotation.col(2) = facing;
  scene.screen.pose.translation = Vec3(0.0, 14.0, 32.0);
  scene.screen.resolution = {600, 340};
  scene.screen.pixel_pitch = 0.2;

  const double dist = 50.0;
  const double elev = deg2rad(-35.0);
  for (const double az_deg : {-7.5, 7.5}) {
    const double az = deg2rad(az_deg);
    const Vec3 pos = dist * Vec3(std::cos(elev) * std::sin(az), std::sin(elev), std::cos(elev) * std::cos(az));
    CameraModel cam;
    cam.pose = look_at(pos, Vec3(0.0, -1.0, 6.0), -Vec3::UnitY());
    cam.focal_length = 300.0;
    cam.principal_point = {63.5, 63.5};
    cam.resolution = {128, 128};
    scene.cameras.push_back(cam);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// JSON I/O. Unknown fields are rejected; numbers round-trip bit-exactly.

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, "field '" + path + "': expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.contains(k)) throw Error(ErrorCode::ParseError, "field '" + path + "." + k + "': unknown field");
  }
  for (const auto& k : allowed) {
    if (!obj.contains(k)) throw Error(ErrorCode::ParseError, "field '" + path + "." + k + "': missing");
  }
}

inline double get_number(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw Error(ErrorCode::ParseError, "field '" + path + "." + key + "': expected a number");
  return v.get<double>();
}

inline Vec3 get_vec3(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 3) {
    throw Error(ErrorCode::ParseError, "field '" + path + "." + key + "': expected an array of 3 numbers");
  }
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number()) {
      throw Error(ErrorCode::ParseError, "field '" + path + "." + key + "': expected an array of 3 numbers");
    }
    out(i) = v[i].get<double>();
  }
  return out;
}

template <typename T>
std::array<T, 2> get_pair(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw Error(ErrorCode::ParseError, "field '" + path + "." + key + "': expected an array of 2 numbers");
  }
  if constexpr (std::is_integral_v<T>) {
    if (!v[0].is_number_integer() || !v[1].is_number_integer()) {
      throw Error(ErrorCode::ParseError, "field '" + path + "." + key + "': expected integers");
    }
  }
  return {v[0].get<T>(), v[1].get<T>()};
}

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json pose_json(const RigidPose& pose) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back(json::array({pose.rotation(r, 0), pose.rotation(r, 1), pose.rotation(r, 2)}));
  return json{{"rotation", rot}, {"translation", vec_json(pose.translation)}};
}

inline RigidPose pose_from_json(const json& obj, const std::string& path) {
  reject_unknown(obj, path, {"rotation", "translation"});
  const auto& rot = obj.at("rotation");
  if (!rot.is_array() || rot.size() != 3) {
    throw Error(ErrorCode::ParseError, "field '" + path + ".rotation': expected a 3x3 array");
  }
  RigidPose pose;
  for (int r = 0; r < 3; ++r) {
    const auto& row = rot[r];
    if (!row.is_array() || row.size() != 3) {
      throw Error(ErrorCode::ParseError, "field '" + path + ".rotation': expected a 3x3 array");
    }
    for (int c = 0; c < 3; ++c) {
      if (!row[c].is_number()) throw Error(ErrorCode::ParseError, "field '" + path + ".rotation': expected numbers");
      pose.rotation(r, c) = row[c].get<double>();
    }
  }
  pose.translation = get_vec3(obj, "translation", path);
  if (!pose.is_valid()) {
    throw Error(ErrorCode::InvariantViolation, path + ": rotation must be orthonormal with det +1");
  }
  return pose;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

/// Throws InvariantViolation naming the first broken scene invariant.
inline void validate_scene(const SceneConfig& scene) {
  if (auto bad = scene.eye.violated_invariant()) {
    throw Error(ErrorCode::InvariantViolation, "eye: " + *bad);
  }
  if (!(scene.screen.pixel_pitch > 0.0)) throw Error(ErrorCode::InvariantViolation, "screen: pixel_pitch > 0");
  if (scene.screen.width() < 1 || scene.screen.height() < 1) {
    throw Error(ErrorCode::InvariantViolation, "screen: resolution >= 1x1");
  }
  if (scene.cameras.empty() || scene.cameras.size() > 2) {
    throw Error(ErrorCode::InvariantViolation, "1 <= number of cameras <= 2");
  }
  for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
    const auto& cam = scene.cameras[i];
    const std::string who = "cameras[" + std::to_string(i) + "]: ";
    if (!(cam.focal_length > 0.0)) throw Error(ErrorCode::InvariantViolation, who + "focal_length > 0");
    if (cam.width() < 16 || cam.height() < 16) throw Error(ErrorCode::InvariantViolation, who + "resolution >= 16x16");
  }
}

inline std::string scene_to_json(const SceneConfig& scene) {
  using nlohmann::json;
  json cams = json::array();
  for (const auto& c : scene.cameras) {
    cams.push_back(json{{"pose", detail::pose_json(c.pose)},
                        {"focal_length", c.focal_length},
                        {"principal_point", json::array({c.principal_point[0], c.principal_point[1]})},
                        {"resolution", json::array({c.resolution[0], c.resolution[1]})}});
  }
  const auto& e = scene.eye;
  json doc{
      {"screen",
       {{"pose", detail::pose_json(scene.screen.pose)},
        {"resolution", json::array({scene.screen.resolution[0], scene.screen.resolution[1]})},
        {"pixel_pitch", scene.screen.pixel_pitch}}},
      {"cameras", cams},
      {"eye",
       {{"sclera_center", detail::vec_json(e.sclera_center)},
        {"optical_axis", detail::vec_json(e.optical_axis.vec())},
        {"sclera_radius", e.sclera_radius},
        {"cornea_radius", e.cornea_radius},
        {"cornea_offset", e.cornea_offset},
        {"cornea_aperture", e.cornea_aperture_deg}}},
  };
  return doc.dump(2) + "\n";
}

inline SceneConfig scene_from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(detail::line_of_offset(text, ex.byte)) + ": " + ex.what());
  }
  detail::reject_unknown(doc, "scene", {"screen", "cameras", "eye"});

  SceneConfig scene;
  const auto& s = doc.at("screen");
  detail::reject_unknown(s, "screen", {"pose", "resolution", "pixel_pitch"});
  scene.screen.pose = detail::pose_from_json(s.at("pose"), "screen.pose");
  scene.screen.resolution = detail::get_pair<int>(s, "resolution", "screen");
  scene.screen.pixel_pitch = detail::get_number(s, "pixel_pitch", "screen");

  const auto& cams = doc.at("cameras");
  if (!cams.is_array()) throw Error(ErrorCode::ParseError, "field 'cameras': expected an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string path = "cameras[" + std::to_string(i) + "]";
    detail::reject_unknown(cams[i], path, {"pose", "focal_length", "principal_point", "resolution"});
    CameraModel cam;
    cam.pose = detail::pose_from_json(cams[i].at("pose"), path + ".pose");
    cam.focal_length = detail::get_number(cams[i], "focal_length", path);
    cam.principal_point = detail::get_pair<double>(cams[i], "principal_point", path);
    cam.resolution = detail::get_pair<int>(cams[i], "resolution", path);
    scene.cameras.push_back(cam);
  }

  const auto& e = doc.at("eye");
  detail::reject_unknown(e, "eye",
                         {"sclera_center", "optical_axis", "sclera_radius", "cornea_radius", "cornea_offset",
                          "cornea_aperture"});
  scene.eye.sclera_center = detail::get_vec3(e, "sclera_center", "eye");
  const Vec3 axis = detail::get_vec3(e, "optical_axis", "eye");
  if (std::abs(axis.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvariantViolation, "eye: optical_axis unit");
  }
  scene.eye.optical_axis = UnitVec3::assume_unit(axis);
  scene.eye.sclera_radius = detail::get_number(e, "sclera_radius", "eye");
  scene.eye.cornea_radius = detail::get_number(e, "cornea_radius", "eye");
  scene.eye.cornea_offset = detail::get_number(e, "cornea_offset", "eye");
  scene.eye.cornea_aperture_deg = detail::get_number(e, "cornea_aperture", "eye");

  validate_scene(scene);
  return scene;
}

inline SceneConfig load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open scene file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

inline void save_scene(const SceneConfig& scene, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write scene file '" + path + "'");
  out << scene_to_json(scene);
}

}  // namespace deflect_gaze
