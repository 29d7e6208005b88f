#include "poseref/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "poseref/rng.hpp"

namespace poseref {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// geometry

bool segment_hits_box(const Vec3& a, const Vec3& b, const OccluderBox& box) {
  const Vec3 d = b - a;
  double tmin = 0.0, tmax = 1.0;
  const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
  const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
  const double o[3] = {a.x, a.y, a.z};
  const double dir[3] = {d.x, d.y, d.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) {
      if (o[axis] < lo[axis] || o[axis] > hi[axis]) return false;
      continue;
    }
    double t0 = (lo[axis] - o[axis]) / dir[axis];
    double t1 = (hi[axis] - o[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  return true;
}

std::vector<Camera> SceneSpec::make_rig() const {
  std::vector<Camera> rig;
  for (int i = 0; i < rig_cameras; ++i) {
    const double az = 2.0 * 3.14159265358979323846 * i / rig_cameras;
    const Vec3 pos{rig_radius * std::cos(az), rig_radius * std::sin(az), rig_height};
    rig.push_back(look_at_camera(pos, target, fx, fy, image_width, image_height,
                                 "cam" + std::to_string(i)));
  }
  return rig;
}

// ---------------------------------------------------------------------------
// scene spec text format

MotionSpec::Kind motion_kind_from(const std::string& word) {
  if (word == "walk") return MotionSpec::Kind::walk;
  if (word == "reach") return MotionSpec::Kind::reach;
  if (word == "idle") return MotionSpec::Kind::idle;
  throw std::runtime_error("unknown motion kind '" + word + "'");
}

std::string to_string(MotionSpec::Kind kind) {
  switch (kind) {
    case MotionSpec::Kind::walk: return "walk";
    case MotionSpec::Kind::reach: return "reach";
    case MotionSpec::Kind::idle: return "idle";
  }
  return "walk";
}

SceneSpec scene_spec_from_text(const std::string& text, const std::string& origin) {
  SceneSpec spec;
  std::istringstream is(text);
  std::string line;
  std::string subject;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("scene spec " + origin + ":" + std::to_string(lineno) +
                             ": " + why);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "image") {
      if (!(ls >> spec.image_width >> spec.image_height)) fail("image expects W H");
    } else if (key == "focal") {
      if (!(ls >> spec.fx >> spec.fy)) fail("focal expects fx fy");
    } else if (key == "rig") {
      if (!(ls >> spec.rig_cameras >> spec.rig_radius >> spec.rig_height))
        fail("rig expects count radius height");
    } else if (key == "target") {
      if (!(ls >> spec.target.x >> spec.target.y >> spec.target.z))
        fail("target expects x y z");
    } else if (key == "occluder") {
      OccluderBox box;
      if (!(ls >> box.lo.x >> box.lo.y >> box.lo.z >> box.hi.x >> box.hi.y >> box.hi.z))
        fail("occluder expects 6 bounds");
      std::string word;
      if (ls >> word) {
        if (word != "vel" || !(ls >> box.velocity.x >> box.velocity.y >> box.velocity.z))
          fail("trailing occluder fields must be 'vel vx vy vz'");
      }
      if (box.lo.x > box.hi.x || box.lo.y > box.hi.y || box.lo.z > box.hi.z)
        fail("occluder bounds inverted");
      spec.occluders.push_back(box);
    } else if (key == "subject") {
      if (!(ls >> subject)) fail("subject expects a name");
    } else if (key == "sequence") {
      if (subject.empty()) fail("sequence before any subject line");
      SceneSpec::Item item;
      item.subject = subject;
      std::string kind;
      if (!(ls >> item.motion.name >> kind >> item.motion.frames >> item.motion.seed))
        fail("sequence expects name kind frames seed");
      item.motion.kind = motion_kind_from(kind);
      if (item.motion.frames < 1) fail("sequence frames must be >= 1");
      spec.items.push_back(item);
    } else {
      fail("unknown keyword '" + key + "'");
    }
  }
  if (spec.items.empty())
    throw std::runtime_error("scene spec " + origin + ": no sequences declared");
  for (std::size_t i = 0; i < spec.items.size(); ++i)
    for (std::size_t j = i + 1; j < spec.items.size(); ++j)
      if (spec.items[i].subject == spec.items[j].subject &&
          spec.items[i].motion.name == spec.items[j].motion.name)
        throw std::runtime_error("scene spec " + origin + ": duplicate sequence " +
                                 spec.items[i].subject + "/" +
                                 spec.items[i].motion.name);
  return spec;
}

SceneSpec parse_scene_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene spec " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return scene_spec_from_text(buf.str(), path.string());
}

std::string scene_spec_to_text(const SceneSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "# poseref scene spec\n";
  os << "image " << spec.image_width << ' ' << spec.image_height << "\n";
  os << "focal " << spec.fx << ' ' << spec.fy << "\n";
  os << "rig " << spec.rig_cameras << ' ' << spec.rig_radius << ' ' << spec.rig_height
     << "\n";
  os << "target " << spec.target.x << ' ' << spec.target.y << ' ' << spec.target.z
     << "\n";
  for (const auto& box : spec.occluders) {
    os << "occluder " << box.lo.x << ' ' << box.lo.y << ' ' << box.lo.z << ' '
       << box.hi.x << ' ' << box.hi.y << ' ' << box.hi.z;
    if (box.velocity.x != 0.0 || box.velocity.y != 0.0 || box.velocity.z != 0.0)
      os << " vel " << box.velocity.x << ' ' << box.velocity.y << ' ' << box.velocity.z;
    os << "\n";
  }
  std::string subject;
  for (const auto& item : spec.items) {
    if (item.subject != subject) {
      subject = item.subject;
      os << "subject " << subject << "\n";
    }
    os << "sequence " << item.motion.name << ' ' << to_string(item.motion.kind) << ' '
       << item.motion.frames << ' ' << item.motion.seed << "\n";
  }
  return os.str();
}

SceneSpec default_benchmark_scene(std::uint64_t seed, int frames_per_sequence) {
  Rng rng(mix_seed(seed, "benchmark-scene"));
  SceneSpec spec;
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int k = 0; k < 3; ++k) {
    const double az = two_pi * (k + 1) / 4.0 + rng.uniform(0.12, 0.45) *
                                                   (rng.uniform() < 0.5 ? 1.0 : -1.0);
    const double radius = rng.uniform(1.6, 2.3);
    const Vec3 center{radius * std::cos(az), radius * std::sin(az),
                      rng.uniform(0.7, 1.2)};
    const Vec3 half{rng.uniform(0.15, 0.32), rng.uniform(0.15, 0.32),
                    rng.uniform(0.40, 0.70)};
    OccluderBox box{center - half, center + half, {0.0, 0.0, 0.0}};
    if (k == 2) {
      const double speed = rng.uniform(0.002, 0.005);
      box.velocity = {-std::sin(az) * speed, std::cos(az) * speed, 0.0};
    }
    spec.occluders.push_back(box);
  }
  struct Row {
    const char* subject;
    const char* name;
    MotionSpec::Kind kind;
  };
  const Row rows[] = {
      {"SS1", "Walk1", MotionSpec::Kind::walk},
      {"SS1", "Walk2", MotionSpec::Kind::walk},
      {"SS1", "Reach1", MotionSpec::Kind::reach},
      {"SS1", "Idle1", MotionSpec::Kind::idle},
      {"SS2", "Walk3", MotionSpec::Kind::walk},
      {"SS2", "Reach2", MotionSpec::Kind::reach},
      {"SS2", "Reach3", MotionSpec::Kind::reach},
      {"SS2", "Idle2", MotionSpec::Kind::idle},
      {"SS3", "Walk4", MotionSpec::Kind::walk},
      {"SS3", "Reach4", MotionSpec::Kind::reach},
  };
  for (const Row& row : rows) {
    SceneSpec::Item item;
    item.subject = row.subject;
    item.motion.name = row.name;
    item.motion.kind = row.kind;
    item.motion.frames = frames_per_sequence;
    item.motion.seed = rng.next_u64();
    spec.items.push_back(item);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// motion synthesis

namespace {

struct BoneLengths {
  double hip = 0.12, thigh = 0.45, shank = 0.45;
  double spine1 = 0.25, spine2 = 0.25, neck = 0.12, head = 0.14;
  double shoulder = 0.18, upper_arm = 0.30, forearm = 0.26;
};

struct FramePose {
  Vec3 p[17];
};

// All limb directions are unit vectors built from an orthonormal (fwd, lat, up)
// frame, so bone lengths are exact by construction.
FramePose build_frame(const BoneLengths& L, const Vec3& root, double heading,
                      double hip_r, double knee_r, double hip_l, double knee_l,
                      double lean, double nod, double arm_r, double raise_r,
                      double bend_r, double arm_l, double raise_l, double bend_l) {
  const Vec3 fwd{std::cos(heading), std::sin(heading), 0.0};
  const Vec3 lat{-std::sin(heading), std::cos(heading), 0.0};  // left
  const Vec3 up{0.0, 0.0, 1.0};

  auto leg_dir = [&](double a) { return fwd * std::sin(a) - up * std::cos(a); };
  auto torso_dir = [&](double a) { return fwd * std::sin(a) + up * std::cos(a); };
  auto arm_dir = [&](double a, double raise, double side) {
    return (fwd * std::sin(a) - up * std::cos(a)) * std::cos(raise) +
           lat * (side * std::sin(raise));
  };

  FramePose f;
  f.p[0] = root;
  f.p[1] = root - lat * L.hip;
  f.p[2] = f.p[1] + leg_dir(hip_r) * L.thigh;
  f.p[3] = f.p[2] + leg_dir(hip_r - knee_r) * L.shank;
  f.p[4] = root + lat * L.hip;
  f.p[5] = f.p[4] + leg_dir(hip_l) * L.thigh;
  f.p[6] = f.p[5] + leg_dir(hip_l - knee_l) * L.shank;
  f.p[7] = root + torso_dir(lean) * L.spine1;
  f.p[8] = f.p[7] + torso_dir(lean) * L.spine2;
  f.p[9] = f.p[8] + torso_dir(lean + nod) * L.neck;
  f.p[10] = f.p[9] + torso_dir(lean + nod) * L.head;
  f.p[11] = f.p[8] + lat * L.shoulder;
  f.p[12] = f.p[11] + arm_dir(arm_l, raise_l, +1.0) * L.upper_arm;
  f.p[13] = f.p[12] + arm_dir(arm_l - bend_l, raise_l, +1.0) * L.forearm;
  f.p[14] = f.p[8] - lat * L.shoulder;
  f.p[15] = f.p[14] + arm_dir(arm_r, raise_r, -1.0) * L.upper_arm;
  f.p[16] = f.p[15] + arm_dir(arm_r - bend_r, raise_r, -1.0) * L.forearm;
  return f;
}

std::vector<double> synthesize_motion(const MotionSpec& motion) {
  Rng rng(mix_seed(motion.seed, "motion"));
  const BoneLengths L;
  const int F = motion.frames;
  std::vector<double> out(static_cast<std::size_t>(F) * 17 * 3);

  const double two_pi = 2.0 * 3.14159265358979323846;
  const double pelvis_z = rng.uniform(0.92, 1.02);

  // Shared style parameters, drawn once per sequence.
  const double gait_step = rng.uniform(0.10, 0.16);   // gait phase per frame
  const double gait0 = rng.uniform(0.0, two_pi);
  const double hip_amp = rng.uniform(0.45, 0.65);
  const double knee_amp = rng.uniform(0.5, 0.9);
  const double arm_amp = rng.uniform(0.25, 0.45);
  const double lean0 = rng.uniform(-0.04, 0.04);

  auto emit = [&](int frame, const FramePose& f) {
    double* dst = out.data() + static_cast<std::size_t>(frame) * 17 * 3;
    for (int j = 0; j < 17; ++j) {
      dst[j * 3 + 0] = f.p[j].x;
      dst[j * 3 + 1] = f.p[j].y;
      dst[j * 3 + 2] = f.p[j].z;
    }
  };

  switch (motion.kind) {
    case MotionSpec::Kind::walk: {
      const double orbit_radius = rng.uniform(0.9, 1.4);
      const double orbit0 = rng.uniform(0.0, two_pi);
      const double orbit_step = rng.uniform(0.008, 0.014) *
                                (rng.uniform() < 0.5 ? 1.0 : -1.0);
      for (int t = 0; t < F; ++t) {
        const double orbit = orbit0 + orbit_step * t;
        const double phase = gait0 + gait_step * t;
        const Vec3 root{orbit_radius * std::cos(orbit), orbit_radius * std::sin(orbit),
                        pelvis_z + 0.015 * std::sin(2.0 * phase)};
        const double heading =
            orbit + (orbit_step >= 0.0 ? 1.0 : -1.0) * two_pi / 4.0;
        const double hr = hip_amp * std::sin(phase);
        const double hl = hip_amp * std::sin(phase + two_pi / 2.0);
        const double kr = knee_amp * (0.5 + 0.5 * std::sin(phase + two_pi / 4.0));
        const double kl = knee_amp * (0.5 + 0.5 * std::sin(phase + 3.0 * two_pi / 4.0));
        const double ar = -arm_amp * std::sin(phase);
        const double al = arm_amp * std::sin(phase);
        emit(t, build_frame(L, root, heading, hr, kr, hl, kl,
                            lean0 + 0.05 * std::sin(phase), 0.06 * std::sin(phase),
                            ar, 0.12, 0.35 + 0.1 * std::sin(phase), al, 0.12,
                            0.35 - 0.1 * std::sin(phase)));
      }
      break;
    }
    case MotionSpec::Kind::reach: {
      const double heading = rng.uniform(0.0, two_pi);
      const Vec3 base{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), pelvis_z};
      const double period = rng.uniform(0.6, 1.4) * F;
      const bool right_arm = rng.uniform() < 0.5;
      for (int t = 0; t < F; ++t) {
        const double raise = 0.5 - 0.5 * std::cos(two_pi * t / period);
        const double sway = 0.04 * std::sin(gait0 + gait_step * 0.3 * t);
        const Vec3 root{base.x, base.y, pelvis_z + 0.005 * std::sin(gait_step * t)};
        const double reach_swing = -0.15 - 1.35 * raise;
        const double reach_bend = 0.6 - 0.55 * raise;
        const double rest_swing = 0.1 + sway;
        const double rest_bend = 0.5;
        emit(t, build_frame(L, root, heading + sway, 0.05 * std::sin(gait_step * t),
                            0.05, -0.05 * std::sin(gait_step * t), 0.05,
                            lean0 + 0.12 * raise, 0.05 * raise,
                            right_arm ? reach_swing : rest_swing,
                            right_arm ? 0.25 * raise + 0.1 : 0.1,
                            right_arm ? reach_bend : rest_bend,
                            right_arm ? rest_swing : reach_swing,
                            right_arm ? 0.1 : 0.25 * raise + 0.1,
                            right_arm ? rest_bend : reach_bend));
      }
      break;
    }
    case MotionSpec::Kind::idle: {
      const double heading = rng.uniform(0.0, two_pi);
      const Vec3 base{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), pelvis_z};
      for (int t = 0; t < F; ++t) {
        const double slow = gait0 + 0.35 * gait_step * t;
        const Vec3 root{base.x, base.y, pelvis_z + 0.006 * std::sin(slow)};
        emit(t, build_frame(L, root, heading + 0.05 * std::sin(slow * 0.7),
                            0.05 * std::sin(slow), 0.06, -0.05 * std::sin(slow), 0.06,
                            lean0 + 0.03 * std::sin(slow), 0.04 * std::sin(slow * 1.3),
                            0.08 * std::sin(slow), 0.1, 0.45,
                            -0.08 * std::sin(slow), 0.1, 0.45));
      }
      break;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// visibility and per-camera recording

std::vector<std::uint8_t> compute_visibility(std::span<const double> world_joints,
                                             int frames, int joints, const Camera& camera,
                                             const std::vector<OccluderBox>& occluders) {
  if (world_joints.size() != static_cast<std::size_t>(frames) * joints * 3)
    throw std::invalid_argument("compute_visibility: joint buffer size mismatch");
  std::vector<std::uint8_t> vis(static_cast<std::size_t>(frames) * joints, 1);
  const Vec3 cam_center = camera.center();
  for (int f = 0; f < frames; ++f) {
    for (int j = 0; j < joints; ++j) {
      const std::size_t base = (static_cast<std::size_t>(f) * joints + j) * 3;
      const Vec3 w{world_joints[base], world_joints[base + 1], world_joints[base + 2]};
      const auto proj = camera.project(w);
      bool visible = proj.in_front && camera.in_frame(proj.u, proj.v);
      if (visible) {
        for (const auto& box : occluders) {
          if (segment_hits_box(cam_center, w, box.at_frame(f))) {
            visible = false;
            break;
          }
        }
      }
      vis[static_cast<std::size_t>(f) * joints + j] = visible ? 1 : 0;
    }
  }
  return vis;
}

GeneratedSequence generate_sequence(const SceneSpec& scene, const SceneSpec::Item& item,
                                    const SkeletonTopology& topo) {
  if (item.motion.frames < 1)
    throw std::invalid_argument("generate_sequence: frames must be >= 1");
  if (topo.joint_count() != 17)
    throw std::invalid_argument("generate_sequence: the motion generator is built for "
                                "the 17-joint topology");
  GeneratedSequence gen;
  gen.frames = item.motion.frames;
  gen.joints = topo.joint_count();
  gen.world_joints = synthesize_motion(item.motion);

  const int F = gen.frames, J = gen.joints;
  for (const Camera& cam : scene.make_rig()) {
    PoseSequence seq;
    seq.subject = item.subject;
    seq.action = item.motion.name;
    seq.camera = cam;
    seq.frames = F;
    seq.joints = J;
    seq.joints_3d.resize(static_cast<std::size_t>(F) * J * 3);
    seq.joints_2d.resize(static_cast<std::size_t>(F) * J * 2);
    seq.visibility = compute_visibility(gen.world_joints, F, J, cam, scene.occluders);

    for (int f = 0; f < F; ++f) {
      for (int j = 0; j < J; ++j) {
        const std::size_t wbase = (static_cast<std::size_t>(f) * J + j) * 3;
        const Vec3 w{gen.world_joints[wbase], gen.world_joints[wbase + 1],
                     gen.world_joints[wbase + 2]};
        const Vec3 c = cam.to_camera(w);
        // Quantize camera-space mm first; pixels are derived from the values the
        // file will actually hold so stored 2D reprojects from stored 3D.
        const float cx_mm = static_cast<float>(c.x * 1000.0);
        const float cy_mm = static_cast<float>(c.y * 1000.0);
        const float cz_mm = static_cast<float>(c.z * 1000.0);
        seq.joints_3d[wbase + 0] = cx_mm;
        seq.joints_3d[wbase + 1] = cy_mm;
        seq.joints_3d[wbase + 2] = cz_mm;
        const std::size_t pbase = (static_cast<std::size_t>(f) * J + j) * 2;
        const std::size_t vbase = static_cast<std::size_t>(f) * J + j;
        if (cz_mm > 0.0f) {
          const double u = cam.fx * (static_cast<double>(cx_mm) / cz_mm) + cam.cx;
          const double v = cam.fy * (static_cast<double>(cy_mm) / cz_mm) + cam.cy;
          seq.joints_2d[pbase + 0] = static_cast<float>(u);
          seq.joints_2d[pbase + 1] = static_cast<float>(v);
          if (!cam.in_frame(seq.joints_2d[pbase + 0], seq.joints_2d[pbase + 1]))
            seq.visibility[vbase] = 0;
        } else {
          seq.joints_2d[pbase + 0] = -1.0f;
          seq.joints_2d[pbase + 1] = -1.0f;
          seq.visibility[vbase] = 0;
        }
      }
    }
    gen.views.push_back(std::move(seq));
  }
  return gen;
}

// ---------------------------------------------------------------------------
// corruption

std::vector<float> corrupt(const PoseSequence& seq, const CorruptionModel& model) {
  if (model.sigma_mm < 0.0 || model.occ_sigma_mm < 0.0)
    throw std::invalid_argument("corrupt: negative noise scale");
  if (model.rho < 0.0 || model.rho >= 1.0)
    throw std::invalid_argument("corrupt: rho must be in [0,1)");
  Rng rng(mix_seed(mix_seed(model.seed, seq.subject + "/" + seq.action), seq.camera.id));
  const int F = seq.frames, J = seq.joints;
  std::vector<float> out(seq.joints_3d.size());
  std::vector<double> drift(static_cast<std::size_t>(J) * 3, 0.0);
  std::vector<bool> drifting(J, false);
  const double innovation = model.occ_sigma_mm * std::sqrt(1.0 - model.rho * model.rho);
  for (int f = 0; f < F; ++f) {
    for (int j = 0; j < J; ++j) {
      const bool occluded = seq.visibility[static_cast<std::size_t>(f) * J + j] == 0;
      double* dj = drift.data() + static_cast<std::size_t>(j) * 3;
      if (occluded) {
        if (!drifting[j]) {
          // Entering an occluded run: start at the stationary marginal so every
          // occluded frame has drift std occ_sigma_mm.
          for (int c = 0; c < 3; ++c) dj[c] = model.occ_sigma_mm * rng.normal();
          drifting[j] = true;
        } else {
          for (int c = 0; c < 3; ++c)
            dj[c] = model.rho * dj[c] + innovation * rng.normal();
        }
      } else {
        drifting[j] = false;
        dj[0] = dj[1] = dj[2] = 0.0;
      }
      const std::size_t base = (static_cast<std::size_t>(f) * J + j) * 3;
      for (int c = 0; c < 3; ++c) {
        const double noise = model.sigma_mm * rng.normal();
        out[base + c] =
            static_cast<float>(static_cast<double>(seq.joints_3d[base + c]) + noise +
                               dj[c]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// windows

std::vector<Window> make_windows(std::span<const float> input_joints,
                                 std::span<const float> gt_joints,
                                 std::span<const std::uint8_t> visibility, int frames,
                                 int joints, int window_frames, int root_joint) {
  if (frames < 1) throw std::invalid_argument("make_windows: frames must be >= 1");
  if (window_frames < 1 || window_frames % 2 == 0)
    throw std::invalid_argument("make_windows: window size must be odd and positive");
  if (root_joint < 0 || root_joint >= joints)
    throw std::invalid_argument("make_windows: root joint out of range");
  const std::size_t need3 = static_cast<std::size_t>(frames) * joints * 3;
  if (input_joints.size() != need3 || gt_joints.size() != need3 ||
      visibility.size() != static_cast<std::size_t>(frames) * joints)
    throw std::invalid_argument("make_windows: buffer sizes do not match frames*joints");

  const int T = window_frames, J = joints, half = T / 2;
  std::vector<Window> out;
  out.reserve(frames);
  for (int c = 0; c < frames; ++c) {
    Window w;
    w.center_frame = c;
    const std::size_t root_base = (static_cast<std::size_t>(c) * J + root_joint) * 3;
    for (int k = 0; k < 3; ++k) w.root_offset[k] = input_joints[root_base + k];
    w.input.resize(static_cast<std::size_t>(3) * T * J);
    w.visibility.resize(static_cast<std::size_t>(T) * J);
    for (int t = 0; t < T; ++t) {
      const int f = std::clamp(c - half + t, 0, frames - 1);
      for (int j = 0; j < J; ++j) {
        const std::size_t src = (static_cast<std::size_t>(f) * J + j) * 3;
        for (int k = 0; k < 3; ++k)
          w.input[(static_cast<std::size_t>(k) * T + t) * J + j] =
              static_cast<double>(input_joints[src + k]) - w.root_offset[k];
        w.visibility[static_cast<std::size_t>(t) * J + j] =
            visibility[static_cast<std::size_t>(f) * J + j];
      }
    }
    w.gt_center.resize(static_cast<std::size_t>(3) * J);
    w.raw_center.resize(static_cast<std::size_t>(3) * J);
    for (int j = 0; j < J; ++j) {
      const std::size_t src = (static_cast<std::size_t>(c) * J + j) * 3;
      for (int k = 0; k < 3; ++k) {
        w.gt_center[static_cast<std::size_t>(k) * J + j] =
            static_cast<double>(gt_joints[src + k]) - w.root_offset[k];
        w.raw_center[static_cast<std::size_t>(k) * J + j] =
            static_cast<double>(input_joints[src + k]);
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Window> make_windows(const PoseSequence& seq, int window_frames,
                                 int root_joint) {
  return make_windows(seq.joints_3d, seq.joints_3d, seq.visibility, seq.frames,
                      seq.joints, window_frames, root_joint);
}

// ---------------------------------------------------------------------------
// on-disk format

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_blob(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<char> read_blob(const fs::path& path, std::size_t expected_bytes,
                            const std::string& expected_checksum) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("missing dataset file " + path.string());
  const std::size_t size = static_cast<std::size_t>(in.tellg());
  if (size != expected_bytes)
    throw std::runtime_error("dataset file " + path.string() + " holds " +
                             std::to_string(size) + " bytes, manifest expects " +
                             std::to_string(expected_bytes));
  in.seekg(0);
  std::vector<char> buf(size);
  in.read(buf.data(), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("short read from " + path.string());
  if (hex64(fnv1a64(buf.data(), buf.size())) != expected_checksum)
    throw std::runtime_error("checksum mismatch for " + path.string());
  return buf;
}

json camera_to_json(const Camera& cam) {
  json j;
  j["id"] = cam.id;
  j["rotation"] = {{cam.rotation.m[0], cam.rotation.m[1], cam.rotation.m[2]},
                   {cam.rotation.m[3], cam.rotation.m[4], cam.rotation.m[5]},
                   {cam.rotation.m[6], cam.rotation.m[7], cam.rotation.m[8]}};
  j["translation"] = {cam.translation.x, cam.translation.y, cam.translation.z};
  j["focal"] = {cam.fx, cam.fy};
  j["principal"] = {cam.cx, cam.cy};
  j["image_size"] = {cam.width, cam.height};
  return j;
}

Camera camera_from_json(const json& j, const std::string& origin) {
  try {
    Camera cam;
    cam.id = j.at("id").get<std::string>();
    const auto& r = j.at("rotation");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) cam.rotation.m[i * 3 + k] = r.at(i).at(k).get<double>();
    const auto& t = j.at("translation");
    cam.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    cam.fx = j.at("focal").at(0).get<double>();
    cam.fy = j.at("focal").at(1).get<double>();
    cam.cx = j.at("principal").at(0).get<double>();
    cam.cy = j.at("principal").at(1).get<double>();
    cam.width = j.at("image_size").at(0).get<int>();
    cam.height = j.at("image_size").at(1).get<int>();
    return cam;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed camera file " + origin + ": " + e.what());
  }
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& root) {
  const auto bad = validate(dataset.topology);
  if (!bad.empty())
    throw std::invalid_argument("write_dataset: invalid topology: " + bad.front());
  fs::create_directories(root);
  save_topology(dataset.topology, root / "topology.txt");
  for (const PoseSequence& seq : dataset.sequences) {
    if (seq.joints != dataset.topology.joint_count())
      throw std::invalid_argument("write_dataset: sequence " + seq.subject + "/" +
                                  seq.action + " joint count does not match topology");
    const fs::path dir = root / seq.subject / seq.action / seq.camera.id;
    fs::create_directories(dir);

    const std::size_t b3 = seq.joints_3d.size() * sizeof(float);
    const std::size_t b2 = seq.joints_2d.size() * sizeof(float);
    const std::size_t bv = seq.visibility.size();
    write_blob(dir / "poses_3d.f32", seq.joints_3d.data(), b3);
    write_blob(dir / "poses_2d.f32", seq.joints_2d.data(), b2);
    write_blob(dir / "visibility.u8", seq.visibility.data(), bv);

    std::ofstream cam(dir / "camera.json", std::ios::binary);
    if (!cam) throw std::runtime_error("cannot write " + (dir / "camera.json").string());
    cam << camera_to_json(seq.camera).dump(2) << "\n";

    json manifest;
    manifest["subject"] = seq.subject;
    manifest["action"] = seq.action;
    manifest["camera"] = seq.camera.id;
    manifest["frames"] = seq.frames;
    manifest["joints"] = seq.joints;
    manifest["units"] = {{"world", "m"}, {"joints_3d", "mm"}, {"joints_2d", "px"}};
    manifest["files"]["poses_3d"] = {
        {"path", "poses_3d.f32"},
        {"dtype", "f32le"},
        {"shape", {seq.frames, seq.joints, 3}},
        {"checksum", hex64(fnv1a64(seq.joints_3d.data(), b3))}};
    manifest["files"]["poses_2d"] = {
        {"path", "poses_2d.f32"},
        {"dtype", "f32le"},
        {"shape", {seq.frames, seq.joints, 2}},
        {"checksum", hex64(fnv1a64(seq.joints_2d.data(), b2))}};
    manifest["files"]["visibility"] = {
        {"path", "visibility.u8"},
        {"dtype", "u8"},
        {"shape", {seq.frames, seq.joints}},
        {"checksum", hex64(fnv1a64(seq.visibility.data(), bv))}};
    std::ofstream mf(dir / "manifest.json", std::ios::binary);
    if (!mf) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
  }
}

namespace {

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing dataset file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Dataset read_dataset(const fs::path& root) {
  if (!fs::exists(root)) throw std::runtime_error("dataset root " + root.string() +
                                                  " does not exist");
  Dataset dataset;
  dataset.topology = load_topology(root / "topology.txt");
  for (const fs::path& subject_dir : sorted_subdirs(root)) {
    for (const fs::path& action_dir : sorted_subdirs(subject_dir)) {
      for (const fs::path& cam_dir : sorted_subdirs(action_dir)) {
        const json manifest = load_json(cam_dir / "manifest.json");
        PoseSequence seq;
        try {
          seq.subject = manifest.at("subject").get<std::string>();
          seq.action = manifest.at("action").get<std::string>();
          seq.frames = manifest.at("frames").get<int>();
          seq.joints = manifest.at("joints").get<int>();
        } catch (const json::exception& e) {
          throw std::runtime_error("malformed manifest " +
                                   (cam_dir / "manifest.json").string() + ": " + e.what());
        }
        if (seq.frames < 1 || seq.joints < 1)
          throw std::runtime_error("manifest " + (cam_dir / "manifest.json").string() +
                                   " declares an empty sequence");
        if (seq.joints != dataset.topology.joint_count())
          throw std::runtime_error("manifest " + (cam_dir / "manifest.json").string() +
                                   " joint count does not match topology.txt");
        seq.camera = camera_from_json(load_json(cam_dir / "camera.json"),
                                      (cam_dir / "camera.json").string());

        auto expect = [&](const char* key, std::size_t count, int per) {
          const auto& f = manifest.at("files").at(key);
          const auto shape = f.at("shape").get<std::vector<long long>>();
          std::size_t n = 1;
          for (long long d : shape) n *= static_cast<std::size_t>(d);
          if (n != count * static_cast<std::size_t>(per) ||
              shape.front() != seq.frames)
            throw std::runtime_error("manifest " + (cam_dir / "manifest.json").string() +
                                     " shape mismatch for " + key);
          return std::pair<fs::path, std::string>(
              cam_dir / f.at("path").get<std::string>(),
              f.at("checksum").get<std::string>());
        };
        const std::size_t fj = static_cast<std::size_t>(seq.frames) * seq.joints;
        try {
          auto [p3, c3] = expect("poses_3d", fj, 3);
          auto buf3 = read_blob(p3, fj * 3 * sizeof(float), c3);
          seq.joints_3d.resize(fj * 3);
          std::memcpy(seq.joints_3d.data(), buf3.data(), buf3.size());

          auto [p2, c2] = expect("poses_2d", fj, 2);
          auto buf2 = read_blob(p2, fj * 2 * sizeof(float), c2);
          seq.joints_2d.resize(fj * 2);
          std::memcpy(seq.joints_2d.data(), buf2.data(), buf2.size());

          auto [pv, cv] = expect("visibility", fj, 1);
          auto bufv = read_blob(pv, fj, cv);
          seq.visibility.assign(bufv.begin(), bufv.end());
        } catch (const json::exception& e) {
          throw std::runtime_error("malformed manifest " +
                                   (cam_dir / "manifest.json").string() + ": " + e.what());
        }
        dataset.sequences.push_back(std::move(seq));
      }
    }
  }
  if (dataset.sequences.empty())
    throw std::runtime_error("dataset root " + root.string() + " holds no sequences");
  return dataset;
}

std::vector<std::string> verify_sequence(const PoseSequence& seq) {
  std::vector<std::string> bad;
  const std::size_t fj = static_cast<std::size_t>(seq.frames) * seq.joints;
  if (seq.joints_3d.size() != fj * 3 || seq.joints_2d.size() != fj * 2 ||
      seq.visibility.size() != fj) {
    bad.push_back("buffer sizes do not match frames*joints");
    return bad;
  }
  for (const auto& msg : seq.camera.validate()) bad.push_back("camera: " + msg);

  for (std::size_t i = 0; i < fj; ++i) {
    const double x = seq.joints_3d[i * 3 + 0];
    const double y = seq.joints_3d[i * 3 + 1];
    const double z = seq.joints_3d[i * 3 + 2];
    const double u = seq.joints_2d[i * 2 + 0];
    const double v = seq.joints_2d[i * 2 + 1];
    const bool visible = seq.visibility[i] != 0;
    if (z <= 0.0) {
      if (visible) {
        bad.push_back("behind-camera joint labeled visible at flat index " +
                      std::to_string(i));
        if (bad.size() > 20) return bad;
      }
      continue;
    }
    const double pu = seq.camera.fx * (x / z) + seq.camera.cx;
    const double pv = seq.camera.fy * (y / z) + seq.camera.cy;
    if (std::fabs(pu - u) > 1e-3 || std::fabs(pv - v) > 1e-3) {
      bad.push_back("stored pixel deviates from reprojection at flat index " +
                    std::to_string(i));
      if (bad.size() > 20) return bad;
    }
    if (visible && !seq.camera.in_frame(u, v)) {
      bad.push_back("out-of-frame joint labeled visible at flat index " +
                    std::to_string(i));
      if (bad.size() > 20) return bad;
    }
  }
  return bad;
}

}  // namespace poseref
