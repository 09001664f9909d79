#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "percmap/map_core.hpp"

namespace percmap {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Camera-frame depth at or below this is treated as behind the camera.
inline constexpr double kDepthEps = 1e-6;

// Pinhole camera. Ego frame: x lateral, y forward, z up. Camera frame:
// x right, y down, z along the optical axis.
struct CameraModel {
  std::string id;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 16> extrinsics{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // ego -> camera
  int image_height = 1;
  int image_width = 1;

  // Camera at `position` looking along heading yaw (0 = +y, pi/2 = +x),
  // pitched down by `pitch` radians.
  static CameraModel from_pose(std::string id, Point3 position, double yaw, double pitch, double fx,
                               double fy, double cx, double cy, int height, int width);

  std::array<double, 9> rotation() const;
  std::array<double, 3> translation() const;
  Point3 center() const;  // optical center in the ego frame
};

// fx, fy > 0; rotation orthonormal within 1e-9 with determinant +1;
// bottom extrinsic row (0,0,0,1); positive image size.
void validate_camera(const CameraModel& cam);

struct CameraRig {
  std::vector<CameraModel> cameras;

  std::size_t size() const { return cameras.size(); }
  // Six 64x64 cameras at 60 degree spacing, 1.6 m above ground.
  static CameraRig surround();
  // Front and rear 64x64 cameras; used by the toy configuration.
  static CameraRig toy();
};

void validate_rig(const CameraRig& rig);

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// std::nullopt means the point is behind the camera (depth <= kDepthEps).
std::optional<PixelProjection> project(const CameraModel& cam, Point3 p);

// P = K [R | t] as a row-major 3x4 matrix.
std::array<double, 12> projection_matrix(const CameraModel& cam);
// Homogeneous projection with an arbitrary 3x4 matrix; `depth` is the third
// homogeneous coordinate.
std::optional<PixelProjection> project_with_matrix(const std::array<double, 12>& P, Point3 p);

// Ego-frame intersection of the pixel ray with the plane z = z_ground, or
// nullopt when the ray is parallel to or points away from the plane.
std::optional<Point2> unproject_ground(const CameraModel& cam, double u, double v, double z_ground);

bool inside_image(const CameraModel& cam, double u, double v);

struct CameraHit {
  std::size_t index;  // position in the rig
  std::string camera_id;
  double u;
  double v;
};

std::vector<CameraHit> visible_cameras(const CameraRig& rig, Point3 p);

nlohmann::json to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);
CameraRig load_rig(const std::string& path);
void save_rig(const CameraRig& rig, const std::string& path);
// FNV-1a over the canonical JSON text, hex encoded.
std::string rig_hash(const CameraRig& rig);

}  // namespace percmap
