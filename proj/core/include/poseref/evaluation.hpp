#pragma once

#include <span>
#include <string>
#include <vector>

#include "poseref/dataset.hpp"
#include "poseref/model.hpp"

namespace poseref {

// Mean per-joint position error in the input units. pred and gt are flattened
// (count, 3, joints) blocks, matching model output layout.
double mpjpe(std::span<const double> pred, std::span<const double> gt, int joints);

// Same, restricted to entries whose mask is nonzero; mask is (count, joints).
// Returns NaN when the mask selects nothing.
double mpjpe_masked(std::span<const double> pred, std::span<const double> gt,
                    std::span<const std::uint8_t> mask, int joints);

// Runs the model over windows in inference mode, batched; returns (count, 3, J)
// predictions in window (root-centered) coordinates.
std::vector<double> forward_windows(RefinerModel& model,
                                    const std::vector<Window>& windows,
                                    int batch_windows = 256);

// Applies the model over one full sequence of stored camera-space poses and
// returns refined poses in the same frame, (frames, joints, 3) mm.
std::vector<float> refine_sequence(RefinerModel& model, std::span<const float> input,
                                   int frames, int joints, int batch_windows = 256);

struct ActionEval {
  std::string action;
  long frames = 0;  // center frames scored, summed over sequences and cameras
  double baseline_mm = 0.0;
  double refined_mm = 0.0;
  long occluded_count = 0;  // joint observations under each mask
  long visible_count = 0;
  double occluded_mm = 0.0;  // meaningful only when the matching count is > 0
  double visible_mm = 0.0;
  double occluded_baseline_mm = 0.0;
  double visible_baseline_mm = 0.0;
};

struct EvalReport {
  std::vector<ActionEval> rows;  // sorted by action name
  ActionEval average;            // pooled over every scored joint, action "AVG"
};

// Corrupts each sequence of the chosen subjects with the given model (same
// deterministic per-sequence streams the trainer uses), refines every window,
// and scores refined and baseline (corrupted) poses against ground truth.
// Occluded/visible columns split joints by the center-frame visibility label.
EvalReport evaluate(const Dataset& data, const std::vector<std::string>& subjects,
                    RefinerModel& model, const CorruptionModel& corruption,
                    int batch_windows = 256);

// action,frames,baseline_mm,refined_mm,occluded_mm,visible_mm with one decimal,
// one row per action plus the pooled AVG row. Mask columns are empty when an
// action has no joints under that mask.
std::string eval_csv(const EvalReport& report);

}  // namespace poseref
