#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace poseref {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

// Row-major 3x3.
struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2);
  Vec3 operator*(const Vec3& v) const;
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
};

// Pinhole camera. World units are meters; p_cam = rotation * p_world + translation,
// pixel = (fx * x/z + cx, fy * y/z + cy) with +z the viewing direction and +y
// pointing down in the image.
struct Camera {
  std::string id;
  Mat3 rotation;
  Vec3 translation;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  struct Projection {
    double u = 0.0, v = 0.0;
    double depth = 0.0;   // camera-space z, meters
    bool in_front = false;  // depth > 0
  };

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const;  // camera position in world coordinates
  Projection project(const Vec3& world) const;
  // Inverse of project for a pixel at the given camera-space depth.
  Vec3 unproject(double u, double v, double depth) const;
  bool in_frame(double u, double v) const {
    return u >= 0.0 && u < width && v >= 0.0 && v < height;
  }
  std::vector<std::string> validate() const;
};

// Camera at `position` looking at `target` with the world +z axis as up.
Camera look_at_camera(const Vec3& position, const Vec3& target, double fx, double fy,
                      int width, int height, std::string id);

}  // namespace poseref
