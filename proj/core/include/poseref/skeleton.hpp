#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace poseref {

// Joint tree plus left/right mirror pairing. parent[j] == -1 marks the root;
// symmetric[j] == -1 marks a midline joint.
struct SkeletonTopology {
  std::vector<std::string> names;
  std::vector<int> parent;
  std::vector<int> symmetric;
  int root = 0;

  int joint_count() const { return static_cast<int>(parent.size()); }
  bool is_midline(int j) const { return symmetric[j] < 0; }
  // One (parent, child) entry per non-root joint, ordered by child index.
  std::vector<std::pair<int, int>> bones() const;
};

// 17-joint layout: pelvis root, right leg 1-3, left leg 4-6, spine chain 7-10,
// left arm 11-13, right arm 14-16.
SkeletonTopology default_topology();

// Hop count from joint j to the root along parent links.
int spine_distance(const SkeletonTopology& topo, int j);

// Structural checks; returns human-readable violations, empty when valid.
std::vector<std::string> validate(const SkeletonTopology& topo);

// Bones whose both endpoints are mirror images of each other, as
// ((parent_l, child_l), (parent_r, child_r)), each unordered pair listed once.
std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> symmetric_bone_pairs(
    const SkeletonTopology& topo);

// Text format: comment lines start with '#'; the first data line is the joint
// count; then one "index name parent sym" line per joint (-1 = none).
SkeletonTopology load_topology(const std::filesystem::path& path);
void save_topology(const SkeletonTopology& topo, const std::filesystem::path& path);
std::string topology_to_text(const SkeletonTopology& topo);
SkeletonTopology topology_from_text(const std::string& text, const std::string& origin);

}  // namespace poseref
