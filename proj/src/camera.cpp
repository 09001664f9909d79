#include "percmap/camera.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "percmap/errors.hpp"
#include "percmap/json_io.hpp"

namespace percmap {

CameraModel CameraModel::from_pose(std::string id, Point3 position, double yaw, double pitch,
                                   double fx, double fy, double cx, double cy, int height,
                                   int width) {
  const double sy = std::sin(yaw), cyaw = std::cos(yaw);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  // Rows of R are the camera axes expressed in the ego frame.
  const std::array<double, 3> right{cyaw, -sy, 0.0};
  const std::array<double, 3> forward{cp * sy, cp * cyaw, -sp};
  // down = forward x right, so that right x down = forward (det +1).
  const std::array<double, 3> down{forward[1] * right[2] - forward[2] * right[1],
                                   forward[2] * right[0] - forward[0] * right[2],
                                   forward[0] * right[1] - forward[1] * right[0]};
  const std::array<std::array<double, 3>, 3> R{right, down, forward};

  CameraModel cam;
  cam.id = std::move(id);
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.image_height = height;
  cam.image_width = width;
  const std::array<double, 3> c{position.x, position.y, position.z};
  for (int r = 0; r < 3; ++r) {
    double t = 0.0;
    for (int k = 0; k < 3; ++k) {
      cam.extrinsics[r * 4 + k] = R[r][k];
      t -= R[r][k] * c[k];
    }
    cam.extrinsics[r * 4 + 3] = t;
  }
  cam.extrinsics[12] = 0.0;
  cam.extrinsics[13] = 0.0;
  cam.extrinsics[14] = 0.0;
  cam.extrinsics[15] = 1.0;
  return cam;
}

std::array<double, 9> CameraModel::rotation() const {
  return {extrinsics[0], extrinsics[1], extrinsics[2], extrinsics[4], extrinsics[5],
          extrinsics[6], extrinsics[8], extrinsics[9], extrinsics[10]};
}

std::array<double, 3> CameraModel::translation() const {
  return {extrinsics[3], extrinsics[7], extrinsics[11]};
}

Point3 CameraModel::center() const {
  const auto R = rotation();
  const auto t = translation();
  // C = -R^T t
  return {-(R[0] * t[0] + R[3] * t[1] + R[6] * t[2]), -(R[1] * t[0] + R[4] * t[1] + R[7] * t[2]),
          -(R[2] * t[0] + R[5] * t[1] + R[8] * t[2])};
}

void validate_camera(const CameraModel& cam) {
  PERCMAP_REQUIRE(cam.fx > 0.0 && cam.fy > 0.0, "camera " + cam.id + ": focal lengths must be positive");
  PERCMAP_REQUIRE(cam.image_height > 0 && cam.image_width > 0,
                  "camera " + cam.id + ": image size must be positive");
  for (double v : cam.extrinsics) PERCMAP_REQUIRE(std::isfinite(v), "camera " + cam.id + ": non-finite extrinsics");
  const auto R = cam.rotation();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += R[i * 3 + k] * R[j * 3 + k];
      PERCMAP_REQUIRE(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-9,
                      "camera " + cam.id + ": extrinsic rotation is not orthonormal");
    }
  const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                     R[2] * (R[3] * R[7] - R[4] * R[6]);
  PERCMAP_REQUIRE(std::abs(det - 1.0) <= 1e-9, "camera " + cam.id + ": rotation determinant must be +1");
  PERCMAP_REQUIRE(cam.extrinsics[12] == 0.0 && cam.extrinsics[13] == 0.0 && cam.extrinsics[14] == 0.0 &&
                      cam.extrinsics[15] == 1.0,
                  "camera " + cam.id + ": extrinsics bottom row must be (0,0,0,1)");
}

namespace {

CameraRig ring(int count, double radius) {
  CameraRig rig;
  constexpr double kPitch = 20.0 * std::numbers::pi / 180.0;
  for (int i = 0; i < count; ++i) {
    const double yaw = 2.0 * std::numbers::pi * i / count;
    const Point3 pos{radius * std::sin(yaw), radius * std::cos(yaw), 1.6};
    rig.cameras.push_back(CameraModel::from_pose("cam" + std::to_string(i), pos, yaw, kPitch, 32.0,
                                                 32.0, 32.0, 32.0, 64, 64));
  }
  return rig;
}

}  // namespace

CameraRig CameraRig::surround() { return ring(6, 1.0); }
CameraRig CameraRig::toy() { return ring(2, 1.0); }

void validate_rig(const CameraRig& rig) {
  std::set<std::string> ids;
  for (const auto& cam : rig.cameras) {
    validate_camera(cam);
    PERCMAP_REQUIRE(ids.insert(cam.id).second, "duplicate camera id '" + cam.id + "'");
  }
}

std::optional<PixelProjection> project(const CameraModel& cam, Point3 p) {
  const auto& E = cam.extrinsics;
  const double xc = E[0] * p.x + E[1] * p.y + E[2] * p.z + E[3];
  const double yc = E[4] * p.x + E[5] * p.y + E[6] * p.z + E[7];
  const double zc = E[8] * p.x + E[9] * p.y + E[10] * p.z + E[11];
  if (!(zc > kDepthEps)) return std::nullopt;
  return PixelProjection{cam.fx * xc / zc + cam.cx, cam.fy * yc / zc + cam.cy, zc};
}

std::array<double, 12> projection_matrix(const CameraModel& cam) {
  const std::array<double, 9> K{cam.fx, 0.0, cam.cx, 0.0, cam.fy, cam.cy, 0.0, 0.0, 1.0};
  std::array<double, 12> P{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += K[r * 3 + k] * cam.extrinsics[k * 4 + c];
      P[r * 4 + c] = acc;
    }
  return P;
}

std::optional<PixelProjection> project_with_matrix(const std::array<double, 12>& P, Point3 p) {
  const double a = P[0] * p.x + P[1] * p.y + P[2] * p.z + P[3];
  const double b = P[4] * p.x + P[5] * p.y + P[6] * p.z + P[7];
  const double w = P[8] * p.x + P[9] * p.y + P[10] * p.z + P[11];
  if (!(w > kDepthEps)) return std::nullopt;
  return PixelProjection{a / w, b / w, w};
}

std::optional<Point2> unproject_ground(const CameraModel& cam, double u, double v, double z_ground) {
  // Ray direction in the camera frame, rotated into the ego frame (R^T d).
  const double dxc = (u - cam.cx) / cam.fx;
  const double dyc = (v - cam.cy) / cam.fy;
  const auto R = cam.rotation();
  const double dx = R[0] * dxc + R[3] * dyc + R[6];
  const double dy = R[1] * dxc + R[4] * dyc + R[7];
  const double dz = R[2] * dxc + R[5] * dyc + R[8];
  const Point3 c = cam.center();
  if (std::abs(dz) < 1e-12) return std::nullopt;
  const double s = (z_ground - c.z) / dz;
  if (!(s > 0.0)) return std::nullopt;
  return Point2{c.x + s * dx, c.y + s * dy};
}

bool inside_image(const CameraModel& cam, double u, double v) {
  return u >= 0.0 && v >= 0.0 && u < cam.image_width && v < cam.image_height;
}

std::vector<CameraHit> visible_cameras(const CameraRig& rig, Point3 p) {
  std::vector<CameraHit> hits;
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    const auto& cam = rig.cameras[i];
    const auto proj = project(cam, p);
    if (proj && inside_image(cam, proj->u, proj->v)) hits.push_back({i, cam.id, proj->u, proj->v});
  }
  return hits;
}

nlohmann::json to_json(const CameraRig& rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : rig.cameras) {
    cams.push_back({{"id", c.id},
                    {"intrinsics", {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}}},
                    {"extrinsics", c.extrinsics},
                    {"image_size", {c.image_height, c.image_width}}});
  }
  return {{"cameras", std::move(cams)}};
}

CameraRig rig_from_json(const nlohmann::json& j) {
  CameraRig rig;
  for (const auto& c : j.at("cameras")) {
    CameraModel cam;
    cam.id = c.at("id").get<std::string>();
    const auto& in = c.at("intrinsics");
    cam.fx = in.at("fx").get<double>();
    cam.fy = in.at("fy").get<double>();
    cam.cx = in.at("cx").get<double>();
    cam.cy = in.at("cy").get<double>();
    const auto ext = c.at("extrinsics").get<std::vector<double>>();
    PERCMAP_REQUIRE(ext.size() == 16, "camera " + cam.id + ": extrinsics must have 16 entries");
    std::copy(ext.begin(), ext.end(), cam.extrinsics.begin());
    cam.image_height = c.at("image_size").at(0).get<int>();
    cam.image_width = c.at("image_size").at(1).get<int>();
    rig.cameras.push_back(std::move(cam));
  }
  validate_rig(rig);
  return rig;
}

CameraRig load_rig(const std::string& path) {
  const auto j = read_json_file(path);
  try {
    return rig_from_json(j);
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

void save_rig(const CameraRig& rig, const std::string& path) { write_json_file(path, to_json(rig)); }

std::string rig_hash(const CameraRig& rig) {
  const std::string text = to_json(rig).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace percmap
