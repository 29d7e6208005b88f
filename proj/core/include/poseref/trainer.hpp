#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "poseref/dataset.hpp"
#include "poseref/losses.hpp"
#include "poseref/model.hpp"

namespace poseref {

struct TrainConfig {
  RefinerConfig model;
  int epochs = 40;
  int batch_windows = 256;  // must be a multiple of clip_frames
  int clip_frames = 4;      // consecutive windows grouped for the velocity term
  double initial_lr = 1e-3;
  double lr_decay = 0.95;
  double lr_drop = 0.5;
  int lr_drop_every = 5;
  LossWeights weights;
  bool sym_vs_gt = false;
  std::uint64_t seed = 1;
  std::vector<std::string> train_subjects{"SS1", "SS2"};
  std::vector<std::string> val_subjects{"SS3"};
  CorruptionModel corruption;

  void validate() const;  // throws std::invalid_argument
};

// key = value settings; unknown keys are an error. Every key is optional and
// falls back to the defaults above. Keys: epochs, batch_windows, clip_frames,
// initial_lr, lr_decay, lr_drop, lr_drop_every, pose_weight, deriv_weight,
// sym_weight, sym_vs_gt, seed, train_subjects, val_subjects, noise_mm,
// occlusion_noise_mm, drift_rho, corruption_seed, frames, joints, hidden,
// layers, temporal_kernel, use_nonlocal, residual_output.
TrainConfig train_config_from_file(const std::filesystem::path& path);
TrainConfig train_config_from_text(const std::string& text, const std::string& origin);
std::string train_config_to_text(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double pose = 0.0;
  double deriv = 0.0;
  double sym = 0.0;
  double val_mpjpe_mm = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double final_val_mpjpe_mm = 0.0;  // NaN when there is no validation split
};

// Trains the model in place. Sequences are corrupted deterministically (same
// streams evaluate() uses), grouped into per-sequence clips of consecutive
// windows (tails shorter than a clip are dropped), shuffled per epoch, and
// batched. Input standardization statistics are computed from the training
// windows before the first step. When metrics_csv is non-empty a CSV with the
// header epoch,lr,train_loss,pose,deriv,sym,val_mpjpe_mm is (re)written there,
// one row per finished epoch. `log` receives one line per epoch when provided.
TrainResult train(RefinerModel& model, const Dataset& data, const TrainConfig& cfg,
                  const std::string& metrics_csv = "", std::ostream* log = nullptr);

}  // namespace poseref
