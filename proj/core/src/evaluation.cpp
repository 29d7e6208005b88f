#include "poseref/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace poseref {

namespace {

double joint_distance(const double* pred, const double* gt, int joints, int j) {
  // Block layout is (3, joints): coordinate-major.
  const double dx = pred[0 * joints + j] - gt[0 * joints + j];
  const double dy = pred[1 * joints + j] - gt[1 * joints + j];
  const double dz = pred[2 * joints + j] - gt[2 * joints + j];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double mpjpe(std::span<const double> pred, std::span<const double> gt, int joints) {
  if (joints < 1) throw std::invalid_argument("mpjpe: joints must be >= 1");
  if (pred.size() != gt.size() || pred.size() % (3 * joints) != 0 || pred.empty())
    throw std::invalid_argument("mpjpe: buffers must be equal (count,3,joints) blocks");
  const std::size_t count = pred.size() / (3 * joints);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double* p = pred.data() + i * 3 * joints;
    const double* g = gt.data() + i * 3 * joints;
    for (int j = 0; j < joints; ++j) sum += joint_distance(p, g, joints, j);
  }
  return sum / (count * joints);
}

double mpjpe_masked(std::span<const double> pred, std::span<const double> gt,
                    std::span<const std::uint8_t> mask, int joints) {
  if (joints < 1) throw std::invalid_argument("mpjpe_masked: joints must be >= 1");
  if (pred.size() != gt.size() || pred.size() % (3 * joints) != 0)
    throw std::invalid_argument(
        "mpjpe_masked: buffers must be equal (count,3,joints) blocks");
  const std::size_t count = pred.size() / (3 * joints);
  if (mask.size() != count * joints)
    throw std::invalid_argument("mpjpe_masked: mask must be (count, joints)");
  double sum = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double* p = pred.data() + i * 3 * joints;
    const double* g = gt.data() + i * 3 * joints;
    for (int j = 0; j < joints; ++j) {
      if (!mask[i * joints + j]) continue;
      sum += joint_distance(p, g, joints, j);
      ++n;
    }
  }
  return n == 0 ? std::nan("") : sum / n;
}

std::vector<double> forward_windows(RefinerModel& model,
                                    const std::vector<Window>& windows,
                                    int batch_windows) {
  if (batch_windows < 1)
    throw std::invalid_argument("forward_windows: batch size must be >= 1");
  const int T = model.config().frames;
  const int J = model.config().joints;
  const std::size_t block = static_cast<std::size_t>(3) * T * J;
  std::vector<double> out(windows.size() * 3 * J);
  NoGradGuard guard;
  for (std::size_t start = 0; start < windows.size();
       start += static_cast<std::size_t>(batch_windows)) {
    const int B = static_cast<int>(
        std::min<std::size_t>(batch_windows, windows.size() - start));
    Tensor x = Tensor::zeros({B, 3, T, J});
    for (int b = 0; b < B; ++b) {
      const Window& w = windows[start + b];
      if (w.input.size() != block)
        throw std::invalid_argument("forward_windows: window block size mismatch");
      std::copy(w.input.begin(), w.input.end(), x.data() + b * block);
    }
    Tensor pred = model.forward(x, false);
    std::copy(pred.values().begin(), pred.values().end(),
              out.begin() + start * 3 * J);
  }
  return out;
}

std::vector<float> refine_sequence(RefinerModel& model, std::span<const float> input,
                                   int frames, int joints, int batch_windows) {
  const std::vector<std::uint8_t> vis(static_cast<std::size_t>(frames) * joints, 1);
  const auto windows = make_windows(input, input, vis, frames, joints,
                                    model.config().frames, 0);
  const auto preds = forward_windows(model, windows, batch_windows);
  std::vector<float> out(static_cast<std::size_t>(frames) * joints * 3);
  for (int f = 0; f < frames; ++f) {
    const Window& w = windows[f];
    const double* p = preds.data() + static_cast<std::size_t>(f) * 3 * joints;
    for (int j = 0; j < joints; ++j)
      for (int c = 0; c < 3; ++c)
        out[(static_cast<std::size_t>(f) * joints + j) * 3 + c] =
            static_cast<float>(p[c * joints + j] + w.root_offset[c]);
  }
  return out;
}

namespace {

struct Accum {
  long frames = 0;
  double refined_sum = 0.0, baseline_sum = 0.0;
  long total_count = 0;
  double occ_refined = 0.0, occ_baseline = 0.0;
  long occ_count = 0;
  double vis_refined = 0.0, vis_baseline = 0.0;
  long vis_count = 0;
};

ActionEval finish(const std::string& action, const Accum& a) {
  ActionEval row;
  row.action = action;
  row.frames = a.frames;
  row.baseline_mm = a.total_count ? a.baseline_sum / a.total_count : 0.0;
  row.refined_mm = a.total_count ? a.refined_sum / a.total_count : 0.0;
  row.occluded_count = a.occ_count;
  row.visible_count = a.vis_count;
  row.occluded_mm = a.occ_count ? a.occ_refined / a.occ_count : 0.0;
  row.occluded_baseline_mm = a.occ_count ? a.occ_baseline / a.occ_count : 0.0;
  row.visible_mm = a.vis_count ? a.vis_refined / a.vis_count : 0.0;
  row.visible_baseline_mm = a.vis_count ? a.vis_baseline / a.vis_count : 0.0;
  return row;
}

}  // namespace

EvalReport evaluate(const Dataset& data, const std::vector<std::string>& subjects,
                    RefinerModel& model, const CorruptionModel& corruption,
                    int batch_windows) {
  const int T = model.config().frames;
  const int J = model.config().joints;
  std::map<std::string, Accum> by_action;
  Accum overall;
  bool any = false;
  for (const PoseSequence& seq : data.sequences) {
    if (std::find(subjects.begin(), subjects.end(), seq.subject) == subjects.end())
      continue;
    any = true;
    if (seq.joints != J)
      throw std::invalid_argument("evaluate: sequence " + seq.subject + "/" + seq.action +
                                  " has " + std::to_string(seq.joints) +
                                  " joints, model expects " + std::to_string(J));
    const auto corrupted = corrupt(seq, corruption);
    const auto windows =
        make_windows(corrupted, seq.joints_3d, seq.visibility, seq.frames, seq.joints, T, 0);
    const auto preds = forward_windows(model, windows, batch_windows);
    Accum& acc = by_action[seq.action];
    const int center = T / 2;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const Window& w = windows[i];
      const double* pred = preds.data() + i * 3 * J;
      acc.frames += 1;
      for (int j = 0; j < J; ++j) {
        const double refined = joint_distance(pred, w.gt_center.data(), J, j);
        // Baseline scores the corrupted center frame itself; the shared root
        // offset cancels in the distance.
        double base = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = w.input[(static_cast<std::size_t>(c) * T + center) * J + j] -
                           w.gt_center[static_cast<std::size_t>(c) * J + j];
          base += d * d;
        }
        base = std::sqrt(base);
        const bool occluded = w.visibility[static_cast<std::size_t>(center) * J + j] == 0;
        for (Accum* a : {&acc, &overall}) {
          a->refined_sum += refined;
          a->baseline_sum += base;
          a->total_count += 1;
          if (occluded) {
            a->occ_refined += refined;
            a->occ_baseline += base;
            a->occ_count += 1;
          } else {
            a->vis_refined += refined;
            a->vis_baseline += base;
            a->vis_count += 1;
          }
        }
      }
    }
  }
  if (!any)
    throw std::invalid_argument("evaluate: no sequences matched the requested subjects");
  EvalReport report;
  for (const auto& [action, acc] : by_action) {
    report.rows.push_back(finish(action, acc));
    overall.frames += acc.frames;
  }
  report.average = finish("AVG", overall);
  return report;
}

std::string eval_csv(const EvalReport& report) {
  std::string out = "action,frames,baseline_mm,refined_mm,occluded_mm,visible_mm\n";
  auto emit = [&out](const ActionEval& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%ld,%.1f,%.1f", row.action.c_str(), row.frames,
                  row.baseline_mm, row.refined_mm);
    out += buf;
    if (row.occluded_count > 0) {
      std::snprintf(buf, sizeof(buf), ",%.1f", row.occluded_mm);
      out += buf;
    } else {
      out += ",";
    }
    if (row.visible_count > 0) {
      std::snprintf(buf, sizeof(buf), ",%.1f", row.visible_mm);
      out += buf;
    } else {
      out += ",";
    }
    out += "\n";
  };
  for (const ActionEval& row : report.rows) emit(row);
  emit(report.average);
  return out;
}

}  // namespace poseref
