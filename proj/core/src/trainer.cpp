#include "poseref/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "poseref/config.hpp"
#include "poseref/evaluation.hpp"
#include "poseref/optimizer.hpp"
#include "poseref/rng.hpp"

namespace poseref {

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (clip_frames < 1)
    throw std::invalid_argument("train config: clip_frames must be >= 1");
  if (weights.deriv > 0.0 && clip_frames < 2)
    throw std::invalid_argument(
        "train config: the velocity term needs clip_frames >= 2");
  if (batch_windows < clip_frames || batch_windows % clip_frames != 0)
    throw std::invalid_argument(
        "train config: batch_windows must be a positive multiple of clip_frames");
  if (!(initial_lr > 0.0))
    throw std::invalid_argument("train config: initial_lr must be positive");
  if (!(lr_decay > 0.0) || !(lr_drop > 0.0) || lr_drop_every < 1)
    throw std::invalid_argument("train config: bad learning-rate schedule");
  if (train_subjects.empty())
    throw std::invalid_argument("train config: train_subjects must not be empty");
  for (const auto& s : train_subjects)
    if (std::find(val_subjects.begin(), val_subjects.end(), s) != val_subjects.end())
      throw std::invalid_argument("train config: subject " + s +
                                  " appears in both train and val splits");
  if (corruption.sigma_mm < 0.0 || corruption.occ_sigma_mm < 0.0 ||
      corruption.rho < 0.0 || corruption.rho >= 1.0)
    throw std::invalid_argument("train config: bad corruption parameters");
}

TrainConfig train_config_from_text(const std::string& text, const std::string& origin) {
  const KvConfig kv = KvConfig::from_text(text, origin);
  TrainConfig cfg;
  cfg.model.frames = kv.get_int("frames", cfg.model.frames);
  cfg.model.joints = kv.get_int("joints", cfg.model.joints);
  cfg.model.hidden = kv.get_int("hidden", cfg.model.hidden);
  cfg.model.layers = kv.get_int("layers", cfg.model.layers);
  cfg.model.temporal_kernel = kv.get_int("temporal_kernel", cfg.model.temporal_kernel);
  cfg.model.use_nonlocal = kv.get_bool("use_nonlocal", cfg.model.use_nonlocal);
  cfg.model.residual_output = kv.get_bool("residual_output", cfg.model.residual_output);
  cfg.epochs = kv.get_int("epochs", cfg.epochs);
  cfg.batch_windows = kv.get_int("batch_windows", cfg.batch_windows);
  cfg.clip_frames = kv.get_int("clip_frames", cfg.clip_frames);
  cfg.initial_lr = kv.get_double("initial_lr", cfg.initial_lr);
  cfg.lr_decay = kv.get_double("lr_decay", cfg.lr_decay);
  cfg.lr_drop = kv.get_double("lr_drop", cfg.lr_drop);
  cfg.lr_drop_every = kv.get_int("lr_drop_every", cfg.lr_drop_every);
  cfg.weights.pose = kv.get_double("pose_weight", cfg.weights.pose);
  cfg.weights.deriv = kv.get_double("deriv_weight", cfg.weights.deriv);
  cfg.weights.sym = kv.get_double("sym_weight", cfg.weights.sym);
  cfg.sym_vs_gt = kv.get_bool("sym_vs_gt", cfg.sym_vs_gt);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.train_subjects = kv.get_list("train_subjects", cfg.train_subjects);
  cfg.val_subjects = kv.get_list("val_subjects", cfg.val_subjects);
  cfg.corruption.sigma_mm = kv.get_double("noise_mm", cfg.corruption.sigma_mm);
  cfg.corruption.occ_sigma_mm =
      kv.get_double("occlusion_noise_mm", cfg.corruption.occ_sigma_mm);
  cfg.corruption.rho = kv.get_double("drift_rho", cfg.corruption.rho);
  cfg.corruption.seed = kv.get_u64("corruption_seed", cfg.seed);
  const auto stray = kv.unused();
  if (!stray.empty()) {
    std::string msg = origin + ": unknown keys:";
    for (const auto& k : stray) msg += " " + k;
    throw std::runtime_error(msg);
  }
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return train_config_from_text(buf.str(), path.string());
}

std::string train_config_to_text(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  auto list = [](const std::vector<std::string>& items) {
    std::string s;
    for (const auto& item : items) {
      if (!s.empty()) s += ",";
      s += item;
    }
    return s;
  };
  os << "frames = " << cfg.model.frames << "\n";
  os << "joints = " << cfg.model.joints << "\n";
  os << "hidden = " << cfg.model.hidden << "\n";
  os << "layers = " << cfg.model.layers << "\n";
  os << "temporal_kernel = " << cfg.model.temporal_kernel << "\n";
  os << "use_nonlocal = " << (cfg.model.use_nonlocal ? "true" : "false") << "\n";
  os << "residual_output = " << (cfg.model.residual_output ? "true" : "false") << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch_windows = " << cfg.batch_windows << "\n";
  os << "clip_frames = " << cfg.clip_frames << "\n";
  os << "initial_lr = " << cfg.initial_lr << "\n";
  os << "lr_decay = " << cfg.lr_decay << "\n";
  os << "lr_drop = " << cfg.lr_drop << "\n";
  os << "lr_drop_every = " << cfg.lr_drop_every << "\n";
  os << "pose_weight = " << cfg.weights.pose << "\n";
  os << "deriv_weight = " << cfg.weights.deriv << "\n";
  os << "sym_weight = " << cfg.weights.sym << "\n";
  os << "sym_vs_gt = " << (cfg.sym_vs_gt ? "true" : "false") << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "train_subjects = " << list(cfg.train_subjects) << "\n";
  os << "val_subjects = " << list(cfg.val_subjects) << "\n";
  os << "noise_mm = " << cfg.corruption.sigma_mm << "\n";
  os << "occlusion_noise_mm = " << cfg.corruption.occ_sigma_mm << "\n";
  os << "drift_rho = " << cfg.corruption.rho << "\n";
  os << "corruption_seed = " << cfg.corruption.seed << "\n";
  return os.str();
}

namespace {

void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics csv " + path);
  out << "epoch,lr,train_loss,pose,deriv,sym,val_mpjpe_mm\n";
  char buf[256];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g\n", e.epoch, e.lr,
                  e.total, e.pose, e.deriv, e.sym, e.val_mpjpe_mm);
    out << buf;
  }
}

}  // namespace

TrainResult train(RefinerModel& model, const Dataset& data, const TrainConfig& cfg,
                  const std::string& metrics_csv, std::ostream* log) {
  cfg.validate();
  const int T = model.config().frames;
  const int J = model.config().joints;
  if (J != data.topology.joint_count())
    throw std::invalid_argument("train: model joint count does not match the dataset");

  auto member = [](const std::vector<std::string>& set, const std::string& s) {
    return std::find(set.begin(), set.end(), s) != set.end();
  };
  for (const auto& subject : cfg.train_subjects) {
    bool found = false;
    for (const auto& seq : data.sequences) found |= seq.subject == subject;
    if (!found)
      throw std::invalid_argument("train: train subject " + subject +
                                  " has no sequences in the dataset");
  }
  for (const auto& subject : cfg.val_subjects) {
    bool found = false;
    for (const auto& seq : data.sequences) found |= seq.subject == subject;
    if (!found)
      throw std::invalid_argument("train: val subject " + subject +
                                  " has no sequences in the dataset");
  }

  // Corrupt and window every relevant sequence once; training batches index into
  // the flat window list.
  std::vector<Window> train_windows, val_windows;
  std::vector<std::size_t> clip_starts;
  const int clip = cfg.clip_frames;
  for (const PoseSequence& seq : data.sequences) {
    const bool in_train = member(cfg.train_subjects, seq.subject);
    const bool in_val = member(cfg.val_subjects, seq.subject);
    if (!in_train && !in_val) continue;
    const auto corrupted = corrupt(seq, cfg.corruption);
    auto windows = make_windows(corrupted, seq.joints_3d, seq.visibility, seq.frames,
                                seq.joints, T, 0);
    if (in_train) {
      const std::size_t usable = windows.size() - windows.size() % clip;
      for (std::size_t i = 0; i < usable; ++i) {
        if (i % clip == 0) clip_starts.push_back(train_windows.size());
        train_windows.push_back(std::move(windows[i]));
      }
    } else {
      for (auto& w : windows) val_windows.push_back(std::move(w));
    }
  }
  if (clip_starts.empty())
    throw std::invalid_argument(
        "train: no training clips; sequences are shorter than clip_frames");

  // Per-channel standardization statistics over the training inputs.
  {
    std::vector<double> mean(3, 0.0), var(3, 0.0);
    std::size_t count = 0;
    for (const Window& w : train_windows) {
      const std::size_t per = w.input.size() / 3;
      for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < per; ++i) mean[c] += w.input[c * per + i];
      count += per;
    }
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(count);
    for (const Window& w : train_windows) {
      const std::size_t per = w.input.size() / 3;
      for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < per; ++i) {
          const double d = w.input[c * per + i] - mean[c];
          var[c] += d * d;
        }
    }
    std::vector<double> stddev(3);
    for (int c = 0; c < 3; ++c)
      stddev[c] = std::max(std::sqrt(var[c] / static_cast<double>(count)), 1e-6);
    model.set_input_stats(mean, stddev);
  }

  // Validation targets, gathered once.
  std::vector<double> val_gt(val_windows.size() * 3 * J);
  for (std::size_t i = 0; i < val_windows.size(); ++i)
    std::copy(val_windows[i].gt_center.begin(), val_windows[i].gt_center.end(),
              val_gt.begin() + i * 3 * J);

  auto validate_mpjpe = [&]() {
    if (val_windows.empty()) return std::nan("");
    const auto preds = forward_windows(model, val_windows, cfg.batch_windows);
    return mpjpe(preds, val_gt, J);
  };

  Amsgrad opt(model.parameters(), {cfg.initial_lr, 0.9, 0.999, 1e-8});
  const int batch_clips = cfg.batch_windows / clip;
  const std::size_t block = static_cast<std::size_t>(3) * T * J;

  TrainResult result;
  result.final_val_mpjpe_mm = std::nan("");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        lr_schedule(epoch, cfg.initial_lr, cfg.lr_decay, cfg.lr_drop, cfg.lr_drop_every);
    opt.set_lr(lr);

    std::vector<std::size_t> order = clip_starts;
    Rng shuffle_rng(mix_seed(cfg.seed, "epoch-" + std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    std::size_t windows_seen = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_clips) {
      const int nclips =
          static_cast<int>(std::min<std::size_t>(batch_clips, order.size() - at));
      const int B = nclips * clip;
      Tensor x = Tensor::zeros({B, 3, T, J});
      Tensor gt = Tensor::zeros({B, 3, J});
      for (int n = 0; n < nclips; ++n) {
        for (int k = 0; k < clip; ++k) {
          const Window& w = train_windows[order[at + n] + k];
          const int b = n * clip + k;
          std::copy(w.input.begin(), w.input.end(), x.data() + b * block);
          std::copy(w.gt_center.begin(), w.gt_center.end(),
                    gt.data() + static_cast<std::size_t>(b) * 3 * J);
        }
      }
      Tensor pred = model.forward(x, true);
      Tensor pred_seq, gt_seq;
      if (cfg.weights.deriv > 0.0) {
        pred_seq = permute(reshape(pred, {nclips, clip, 3, J}), {0, 2, 3, 1});
        gt_seq = permute(reshape(gt, {nclips, clip, 3, J}), {0, 2, 3, 1});
      }
      LossTerms terms = total_loss(pred, gt, pred_seq, gt_seq, data.topology,
                                   cfg.weights, cfg.sym_vs_gt);
      opt.zero_grad();
      terms.total.backward();
      opt.step();

      stats.total += terms.total.item() * B;
      stats.pose += terms.pose.item() * B;
      if (terms.deriv.defined()) stats.deriv += terms.deriv.item() * B;
      stats.sym += terms.sym.item() * B;
      windows_seen += B;
    }
    stats.total /= static_cast<double>(windows_seen);
    stats.pose /= static_cast<double>(windows_seen);
    stats.deriv /= static_cast<double>(windows_seen);
    stats.sym /= static_cast<double>(windows_seen);
    stats.val_mpjpe_mm = validate_mpjpe();
    result.history.push_back(stats);
    result.final_val_mpjpe_mm = stats.val_mpjpe_mm;

    if (!metrics_csv.empty()) write_metrics_csv(metrics_csv, result.history);
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "epoch %3d  lr %.6f  loss %.4f  pose %.4f  deriv %.4f  sym %.4f  "
                    "val mpjpe %.2f mm\n",
                    epoch, lr, stats.total, stats.pose, stats.deriv, stats.sym,
                    stats.val_mpjpe_mm);
      (*log) << buf << std::flush;
    }
  }
  if (cfg.epochs == 0) result.final_val_mpjpe_mm = validate_mpjpe();
  return result;
}

}  // namespace poseref
