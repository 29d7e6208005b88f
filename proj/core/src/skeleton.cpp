#include "poseref/skeleton.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace poseref {

std::vector<std::pair<int, int>> SkeletonTopology::bones() const {
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < joint_count(); ++j)
    if (parent[j] >= 0) out.emplace_back(parent[j], j);
  return out;
}

SkeletonTopology default_topology() {
  SkeletonTopology t;
  t.names = {"pelvis",     "hip_r",   "knee_r",  "ankle_r", "hip_l",   "knee_l",
             "ankle_l",    "spine",   "thorax",  "neck",    "head",    "shoulder_l",
             "elbow_l",    "wrist_l", "shoulder_r", "elbow_r", "wrist_r"};
  t.parent = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  t.symmetric = {-1, 4, 5, 6, 1, 2, 3, -1, -1, -1, -1, 14, 15, 16, 11, 12, 13};
  t.root = 0;
  return t;
}

int spine_distance(const SkeletonTopology& topo, int j) {
  const int n = topo.joint_count();
  if (j < 0 || j >= n) throw std::out_of_range("spine_distance: joint out of range");
  int hops = 0;
  while (topo.parent[j] >= 0) {
    j = topo.parent[j];
    if (++hops > n) throw std::invalid_argument("spine_distance: parent cycle");
  }
  return hops;
}

std::vector<std::string> validate(const SkeletonTopology& topo) {
  std::vector<std::string> bad;
  const int n = topo.joint_count();
  if (n == 0) {
    bad.push_back("topology has no joints");
    return bad;
  }
  if (topo.names.size() != static_cast<std::size_t>(n) ||
      topo.symmetric.size() != static_cast<std::size_t>(n)) {
    bad.push_back("names/parent/symmetric arrays differ in length");
    return bad;
  }

  int roots = 0;
  for (int j = 0; j < n; ++j) {
    const int p = topo.parent[j];
    if (p == -1) {
      ++roots;
      if (j != topo.root) bad.push_back("parentless joint " + std::to_string(j) +
                                        " is not the declared root");
    } else if (p < 0 || p >= n) {
      bad.push_back("joint " + std::to_string(j) + " has out-of-range parent");
    } else if (p == j) {
      bad.push_back("joint " + std::to_string(j) + " is its own parent");
    }
  }
  if (roots != 1) bad.push_back("expected exactly one root, found " + std::to_string(roots));

  // Every joint must reach the root without revisiting anything.
  for (int j = 0; j < n; ++j) {
    int cur = j, hops = 0;
    while (cur >= 0 && topo.parent[cur] >= 0 && topo.parent[cur] < n) {
      cur = topo.parent[cur];
      if (++hops > n) {
        bad.push_back("parent cycle reachable from joint " + std::to_string(j));
        break;
      }
    }
    if (hops <= n && cur >= 0 && topo.parent[cur] != -1)
      bad.push_back("joint " + std::to_string(j) + " does not reach the root");
  }

  for (int j = 0; j < n; ++j) {
    const int s = topo.symmetric[j];
    if (s == -1) continue;
    if (s < 0 || s >= n) {
      bad.push_back("joint " + std::to_string(j) + " has out-of-range mirror");
      continue;
    }
    if (s == j) bad.push_back("joint " + std::to_string(j) + " mirrors itself");
    else if (topo.symmetric[s] != j)
      bad.push_back("mirror pairing of joints " + std::to_string(j) + " and " +
                    std::to_string(s) + " is not involutive");
  }

  // Mirrored joints must hang off mirrored (or shared midline) parents, otherwise
  // left and right limbs would not be structurally interchangeable.
  for (int j = 0; j < n; ++j) {
    const int s = topo.symmetric[j];
    if (s < 0 || s >= n || topo.symmetric[s] != j) continue;
    const int pj = topo.parent[j], ps = topo.parent[s];
    if (pj < 0 || ps < 0) {
      if (pj != ps)
        bad.push_back("mirrored joints " + std::to_string(j) + "," + std::to_string(s) +
                      " disagree about having a parent");
      continue;
    }
    const bool parents_mirrored = topo.symmetric[pj] == ps;
    const bool parents_midline =
        topo.symmetric[pj] == -1 && topo.symmetric[ps] == -1 && pj == ps;
    if (!parents_mirrored && !parents_midline)
      bad.push_back("parents of mirrored joints " + std::to_string(j) + "," +
                    std::to_string(s) + " are neither mirrored nor a shared midline joint");
  }
  return bad;
}

std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> symmetric_bone_pairs(
    const SkeletonTopology& topo) {
  std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> out;
  for (const auto& [p, c] : topo.bones()) {
    const int sp = topo.symmetric[p], sc = topo.symmetric[c];
    if (sp < 0 || sc < 0) continue;           // needs both endpoints mirrored
    if (topo.parent[sc] != sp) continue;      // mirror bone must exist
    if (c < sc) out.push_back({{p, c}, {sp, sc}});  // list each pair once
  }
  return out;
}

std::string topology_to_text(const SkeletonTopology& topo) {
  std::ostringstream os;
  os << "# poseref topology v1\n";
  os << "# index name parent sym   (-1 = none)\n";
  os << topo.joint_count() << "\n";
  for (int j = 0; j < topo.joint_count(); ++j)
    os << j << ' ' << topo.names[j] << ' ' << topo.parent[j] << ' ' << topo.symmetric[j]
       << "\n";
  return os.str();
}

SkeletonTopology topology_from_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("topology " + origin + ": " + why);
  };
  int count = -1;
  SkeletonTopology topo;
  int next = 0;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (count < 0) {
      if (!(ls >> count) || count <= 0) fail("invalid joint count line: '" + line + "'");
      topo.names.resize(count);
      topo.parent.assign(count, -1);
      topo.symmetric.assign(count, -1);
      continue;
    }
    int index, parent, sym;
    std::string name;
    if (!(ls >> index >> name >> parent >> sym)) fail("malformed joint line: '" + line + "'");
    if (index != next) fail("joint lines must be ordered; expected index " +
                            std::to_string(next));
    if (index >= count) fail("more joint lines than the declared count");
    topo.names[index] = name;
    topo.parent[index] = parent;
    topo.symmetric[index] = sym;
    ++next;
  }
  if (count < 0) fail("missing joint count");
  if (next != count) fail("expected " + std::to_string(count) + " joint lines, got " +
                          std::to_string(next));
  for (int j = 0; j < count; ++j)
    if (topo.parent[j] == -1) {
      topo.root = j;
      break;
    }
  const auto bad = validate(topo);
  if (!bad.empty()) fail(bad.front());
  return topo;
}

SkeletonTopology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return topology_from_text(buf.str(), path.string());
}

void save_topology(const SkeletonTopology& topo, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write topology file " + path.string());
  out << topology_to_text(topo);
}

}  // namespace poseref
