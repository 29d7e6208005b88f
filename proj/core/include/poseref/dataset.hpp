#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "poseref/camera.hpp"
#include "poseref/skeleton.hpp"

namespace poseref {

// Axis-aligned occluder, world meters. A nonzero velocity moves the box by that
// offset every frame.
struct OccluderBox {
  Vec3 lo, hi;
  Vec3 velocity{0.0, 0.0, 0.0};

  OccluderBox at_frame(int frame) const {
    const Vec3 d = velocity * static_cast<double>(frame);
    return {lo + d, hi + d, {0.0, 0.0, 0.0}};
  }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
           p.z <= hi.z;
  }
};

// True when the open segment from a to b crosses the box (slab test). A box
// containing an endpoint counts as a hit.
bool segment_hits_box(const Vec3& a, const Vec3& b, const OccluderBox& box);

// One recorded take from one camera. joints_3d is camera-space millimeters,
// joints_2d is pixels, both row-major (frames, joints, coord). visibility is 1
// for visible, 0 for occluded or out of frame.
struct PoseSequence {
  std::string subject;
  std::string action;
  Camera camera;
  int frames = 0;
  int joints = 0;
  std::vector<float> joints_3d;
  std::vector<float> joints_2d;
  std::vector<std::uint8_t> visibility;
};

struct MotionSpec {
  enum class Kind { walk, reach, idle };
  std::string name;  // action label, e.g. "Walk1"
  Kind kind = Kind::walk;
  int frames = 0;
  std::uint64_t seed = 0;
};

MotionSpec::Kind motion_kind_from(const std::string& word);
std::string to_string(MotionSpec::Kind kind);

struct SceneSpec {
  int image_width = 1000;
  int image_height = 1000;
  double fx = 1100.0, fy = 1100.0;
  int rig_cameras = 4;
  double rig_radius = 4.0;
  double rig_height = 1.6;
  Vec3 target{0.0, 0.0, 1.0};
  std::vector<OccluderBox> occluders;

  struct Item {
    std::string subject;
    MotionSpec motion;
  };
  std::vector<Item> items;

  std::vector<Camera> make_rig() const;
};

// Line-oriented text format; see the repository README for the grammar.
SceneSpec parse_scene_spec(const std::filesystem::path& path);
SceneSpec scene_spec_from_text(const std::string& text, const std::string& origin);
std::string scene_spec_to_text(const SceneSpec& spec);

// The seeded two-subject-train / one-subject-test scene used by the desk-scale
// experiment: 10 sequences x 4 cameras, subjects SS1/SS2/SS3, boxes in view.
SceneSpec default_benchmark_scene(std::uint64_t seed, int frames_per_sequence = 240);

// World-space motion plus the per-camera recordings derived from it.
struct GeneratedSequence {
  std::vector<double> world_joints;  // (frames, joints, 3) meters
  int frames = 0;
  int joints = 0;
  std::vector<PoseSequence> views;
};

// Deterministic in spec/topology; bone lengths stay constant across frames.
GeneratedSequence generate_sequence(const SceneSpec& scene, const SceneSpec::Item& item,
                                    const SkeletonTopology& topo);

// Visibility labels for world-space joints against one camera and a set of boxes:
// 0 when the camera-to-joint segment crosses a box, the projection leaves the
// frame, or the joint is behind the camera.
std::vector<std::uint8_t> compute_visibility(std::span<const double> world_joints,
                                             int frames, int joints, const Camera& camera,
                                             const std::vector<OccluderBox>& occluders);

// Measurement corruption: iid Gaussian noise (mm) on every joint plus a smooth
// first-order autoregressive drift (marginal std occ_sigma_mm) on occluded joints.
struct CorruptionModel {
  double sigma_mm = 20.0;
  double occ_sigma_mm = 60.0;
  double rho = 0.9;  // frame-to-frame drift correlation
  std::uint64_t seed = 0;
};

std::vector<float> corrupt(const PoseSequence& seq, const CorruptionModel& model);

// One training/inference window per frame: `frames` consecutive input frames
// (edges replicated) root-centered by the input's center-frame root joint.
struct Window {
  int center_frame = 0;
  std::array<double, 3> root_offset{};     // mm, the subtracted center root
  std::vector<double> input;               // (3, T, J) centered input block
  std::vector<double> gt_center;           // (3, J) gt center frame, same offset
  std::vector<double> raw_center;          // (3, J) uncentered input center frame
  std::vector<std::uint8_t> visibility;    // (T, J)
};

// input_joints are the (possibly corrupted) poses fed to the model; gt_joints the
// clean targets. Both are (frames, joints, 3) mm like PoseSequence storage.
std::vector<Window> make_windows(std::span<const float> input_joints,
                                 std::span<const float> gt_joints,
                                 std::span<const std::uint8_t> visibility, int frames,
                                 int joints, int window_frames, int root_joint);
std::vector<Window> make_windows(const PoseSequence& seq, int window_frames,
                                 int root_joint = 0);

struct Dataset {
  SkeletonTopology topology;
  std::vector<PoseSequence> sequences;
};

// Layout: <root>/topology.txt plus <root>/<subject>/<action>/<camera-id>/ holding
// manifest.json, camera.json, poses_3d.f32, poses_2d.f32, visibility.u8. Binary
// blobs are little-endian row-major with shapes echoed (and checksummed) in the
// manifest.
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset read_dataset(const std::filesystem::path& root);

// Reprojection / label soundness check used by tests and `generate`; returns
// human-readable violations, empty when the sequence is internally consistent.
std::vector<std::string> verify_sequence(const PoseSequence& seq);

}  // namespace poseref
