#include "poseref/camera.hpp"

#include <stdexcept>

namespace poseref {

Mat3 Mat3::from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
  Mat3 r;
  r.m[0] = r0.x; r.m[1] = r0.y; r.m[2] = r0.z;
  r.m[3] = r1.x; r.m[4] = r1.y; r.m[5] = r1.z;
  r.m[6] = r2.x; r.m[7] = r2.y; r.m[8] = r2.z;
  return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = s;
    }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
  return r;
}

Vec3 Camera::center() const {
  // p_cam = R p + t = 0  =>  p = -R^T t
  return rotation.transposed() * (translation * -1.0);
}

Camera::Projection Camera::project(const Vec3& world) const {
  const Vec3 p = to_camera(world);
  Projection out;
  out.depth = p.z;
  out.in_front = p.z > 0.0;
  if (out.in_front) {
    out.u = fx * p.x / p.z + cx;
    out.v = fy * p.y / p.z + cy;
  }
  return out;
}

Vec3 Camera::unproject(double u, double v, double depth) const {
  const Vec3 cam{(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  return rotation.transposed() * (cam - translation);
}

std::vector<std::string> Camera::validate() const {
  std::vector<std::string> bad;
  if (fx <= 0.0 || fy <= 0.0) bad.push_back("focal lengths must be positive");
  if (width <= 0 || height <= 0) bad.push_back("image size must be positive");
  const Mat3 should_be_identity = rotation * rotation.transposed();
  double err = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double target = (i % 4 == 0) ? 1.0 : 0.0;
    err = std::max(err, std::fabs(should_be_identity.m[i] - target));
  }
  if (err > 1e-9) bad.push_back("rotation is not orthonormal");
  return bad;
}

Camera look_at_camera(const Vec3& position, const Vec3& target, double fx, double fy,
                      int width, int height, std::string id) {
  const Vec3 forward = (target - position).normalized();
  const Vec3 world_up{0.0, 0.0, 1.0};
  if (std::fabs(forward.dot(world_up)) > 0.999)
    throw std::invalid_argument("look_at_camera: view direction too close to vertical");
  const Vec3 right = forward.cross(world_up).normalized();
  const Vec3 down = forward.cross(right);  // completes the right-handed frame, +y image down
  Camera cam;
  cam.id = std::move(id);
  cam.rotation = Mat3::from_rows(right, down, forward);
  cam.translation = (cam.rotation * position) * -1.0;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

}  // namespace poseref
