#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "poseref/checkpoint.hpp"
#include "poseref/dataset.hpp"
#include "poseref/evaluation.hpp"
#include "poseref/graph.hpp"
#include "poseref/model.hpp"
#include "poseref/skeleton.hpp"
#include "poseref/trainer.hpp"

namespace fs = std::filesystem;
using namespace poseref;

namespace {

constexpr std::uint64_t kDefaultSeed = 7;

struct GenerateOpts {
  std::string out;
  std::string config;
  std::uint64_t seed = kDefaultSeed;
  int frames = 240;
  bool skip_verify = false;
};

int cmd_generate(const GenerateOpts& o) {
  SceneSpec scene = o.config.empty() ? default_benchmark_scene(o.seed, o.frames)
                                     : parse_scene_spec(o.config);
  std::cerr << "resolved scene spec:\n" << scene_spec_to_text(scene);

  const SkeletonTopology topo = default_topology();
  Dataset dataset;
  dataset.topology = topo;
  long occluded = 0, labeled = 0;
  for (const auto& item : scene.items) {
    const GeneratedSequence gen = generate_sequence(scene, item, topo);
    for (const PoseSequence& view : gen.views) {
      for (std::uint8_t v : view.visibility) {
        occluded += v == 0;
        ++labeled;
      }
      dataset.sequences.push_back(view);
    }
  }
  if (!o.skip_verify) {
    for (const PoseSequence& seq : dataset.sequences) {
      const auto bad = verify_sequence(seq);
      if (!bad.empty())
        throw std::runtime_error("generated sequence " + seq.subject + "/" + seq.action +
                                 "/" + seq.camera.id + " failed checks: " + bad.front());
    }
  }
  write_dataset(dataset, o.out);
  {
    std::ofstream spec_out(fs::path(o.out) / "scene.txt");
    spec_out << scene_spec_to_text(scene);
  }
  std::cerr << "wrote " << dataset.sequences.size() << " sequences ("
            << scene.items.size() << " motions x " << scene.rig_cameras
            << " cameras) to " << o.out << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * occluded / std::max(labeled, 1L));
  std::cerr << "occluded joint labels: " << buf << "\n";
  return 0;
}

struct TrainOpts {
  std::string dataset;
  std::string config;
  std::string out = "model.ckpt";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int frames = 0;
  int joints = 0;
};

int cmd_train(const TrainOpts& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{}
                                     : train_config_from_file(o.config);
  if (o.seed_set) {
    cfg.seed = o.seed;
    cfg.corruption.seed = o.seed;
  }
  if (o.frames > 0) cfg.model.frames = o.frames;
  if (o.joints > 0) cfg.model.joints = o.joints;
  cfg.validate();

  const Dataset data = read_dataset(o.dataset);
  std::cerr << "resolved training config:\n" << train_config_to_text(cfg);
  std::cerr << "dataset: " << o.dataset << " (" << data.sequences.size()
            << " sequences)\n";

  RefinerModel model(cfg.model, data.topology, cfg.seed);
  std::cerr << "model parameters: " << model.parameter_count() << "\n";

  fs::path metrics = fs::path(o.out);
  metrics.replace_extension(".metrics.csv");
  const TrainResult result = train(model, data, cfg, metrics.string(), &std::cerr);

  CheckpointInfo info;
  info.seed = cfg.seed;
  info.epoch = cfg.epochs;
  info.extra["train_config"] = train_config_to_text(cfg);
  save_checkpoint(model, o.out, info);
  std::cerr << "checkpoint: " << o.out << "\nmetrics: " << metrics.string() << "\n";
  if (!result.history.empty()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "final val mpjpe: %.2f mm\n",
                  result.final_val_mpjpe_mm);
    std::cerr << buf;
  }
  return 0;
}

struct RefineOpts {
  std::string model;
  std::string in;
  std::string out;
};

int cmd_refine(const RefineOpts& o) {
  LoadedCheckpoint loaded = load_checkpoint(o.model);
  std::cerr << "model: " << o.model << " (epoch " << loaded.info.epoch << ", "
            << loaded.model.parameter_count() << " parameters)\n";
  Dataset data = read_dataset(o.in);
  if (data.topology.joint_count() != loaded.model.config().joints)
    throw std::runtime_error("refine: dataset joint count does not match the model");
  std::cerr << "input: " << o.in << " (" << data.sequences.size() << " sequences)\n";

  for (PoseSequence& seq : data.sequences) {
    seq.joints_3d = refine_sequence(loaded.model, seq.joints_3d, seq.frames, seq.joints);
    // Keep the stored-2D-reprojects-from-stored-3D invariant for the refined poses.
    for (std::size_t i = 0; i < seq.joints_3d.size() / 3; ++i) {
      const float z = seq.joints_3d[i * 3 + 2];
      if (z > 0.0f) {
        seq.joints_2d[i * 2 + 0] = static_cast<float>(
            seq.camera.fx * (static_cast<double>(seq.joints_3d[i * 3]) / z) +
            seq.camera.cx);
        seq.joints_2d[i * 2 + 1] = static_cast<float>(
            seq.camera.fy * (static_cast<double>(seq.joints_3d[i * 3 + 1]) / z) +
            seq.camera.cy);
      } else {
        seq.joints_2d[i * 2 + 0] = -1.0f;
        seq.joints_2d[i * 2 + 1] = -1.0f;
        seq.visibility[i] = 0;
      }
    }
  }
  write_dataset(data, o.out);
  std::cerr << "wrote refined dataset to " << o.out << "\n";
  return 0;
}

struct EvalOpts {
  std::string model;
  std::string dataset;
  std::string out;
  std::string format = "csv";
  std::vector<std::string> subjects;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_eval(const EvalOpts& o) {
  LoadedCheckpoint loaded = load_checkpoint(o.model);
  const Dataset data = read_dataset(o.dataset);

  // Default evaluation setup comes from the checkpoint's training record.
  TrainConfig trained;
  const auto it = loaded.info.extra.find("train_config");
  if (it != loaded.info.extra.end())
    trained = train_config_from_text(it->second, o.model + "#train_config");
  std::vector<std::string> subjects = o.subjects.empty() ? trained.val_subjects
                                                         : o.subjects;
  CorruptionModel corruption = trained.corruption;
  if (o.seed_set) corruption.seed = o.seed;

  std::cerr << "model: " << o.model << "\ndataset: " << o.dataset << "\nsubjects:";
  for (const auto& s : subjects) std::cerr << " " << s;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "\ncorruption: noise %.1f mm, occlusion noise %.1f mm, rho %.3f, "
                "seed %llu\n",
                corruption.sigma_mm, corruption.occ_sigma_mm, corruption.rho,
                static_cast<unsigned long long>(corruption.seed));
  std::cerr << buf;

  const EvalReport report = evaluate(data, subjects, loaded.model, corruption);
  std::string rendered;
  if (o.format == "csv") {
    rendered = eval_csv(report);
  } else if (o.format == "table") {
    rendered = "action            frames   baseline   refined\n";
    auto row = [&rendered](const ActionEval& r) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-16s %8ld %9.1f mm %6.1f mm\n",
                    r.action.c_str(), r.frames, r.baseline_mm, r.refined_mm);
      rendered += line;
    };
    for (const auto& r : report.rows) row(r);
    row(report.average);
  } else {
    throw std::runtime_error("eval: unknown format '" + o.format +
                             "' (expected csv or table)");
  }
  if (o.out.empty()) {
    std::cout << rendered;
  } else {
    std::ofstream out(o.out);
    if (!out) throw std::runtime_error("cannot write " + o.out);
    out << rendered;
    std::cerr << "report: " << o.out << "\n";
  }
  return 0;
}

struct GraphcheckOpts {
  std::string dataset;
  std::string out;
  std::string format = "summary";
  int frames = 3;
  int joints = 0;
};

int cmd_graphcheck(const GraphcheckOpts& o) {
  const SkeletonTopology topo = o.dataset.empty()
                                    ? default_topology()
                                    : load_topology(fs::path(o.dataset) / "topology.txt");
  if (o.joints > 0 && o.joints != topo.joint_count())
    throw std::runtime_error("graphcheck: --joints " + std::to_string(o.joints) +
                             " does not match the topology (" +
                             std::to_string(topo.joint_count()) + " joints)");
  const StGraph graph = build_graph(topo, o.frames);

  std::string text;
  if (o.format == "full") {
    text = dump_graph(graph);
  } else if (o.format == "summary") {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "P = %d (frames %d x joints %d)\n", graph.nodes,
                  graph.frames, graph.joints);
    text = buf;
    static const char* kClassNames[6] = {"self",        "toward spine", "away from spine",
                                         "mirror",      "next frame",   "previous frame"};
    for (int k = 0; k < 6; ++k) {
      const auto& adj = graph.class_adj[k].values();
      long edges = 0;
      for (double v : adj) edges += v != 0.0;
      double norm_sum = 0.0;
      for (double v : graph.class_norm[k].values()) norm_sum += v;
      std::snprintf(buf, sizeof(buf), "class %d (%s): %ld edges, normalized sum %.6g\n",
                    k, kClassNames[k], edges, norm_sum);
      text += buf;
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < graph.adj_tilde.numel(); ++i) {
      double s = 0.0;
      for (int k = 0; k < 6; ++k) s += graph.class_adj[k].values()[i];
      residual = std::max(residual, std::fabs(s - graph.adj_tilde.values()[i]));
    }
    std::snprintf(buf, sizeof(buf), "max |sum of classes - (A+I)| = %.3g\n", residual);
    text += buf;
    std::snprintf(buf, sizeof(buf), "spectral radius of normalized A+I = %.9f\n",
                  spectral_radius(graph.norm_tilde));
    text += buf;
  } else {
    throw std::runtime_error("graphcheck: unknown format '" + o.format +
                             "' (expected summary or full)");
  }
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.out);
    if (!out) throw std::runtime_error("cannot write " + o.out);
    out << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D pose sequence toolkit: synthetic capture, refinement training, "
               "evaluation"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* generate = app.add_subcommand(
      "generate", "Build a synthetic pose dataset with occlusion labels");
  generate->add_option("--out", gen.out, "output dataset directory")->required();
  generate->add_option("--config", gen.config, "scene spec file (default: built-in scene)");
  generate->add_option("--seed", gen.seed, "scene seed");
  generate->add_option("--frames", gen.frames, "frames per sequence for the built-in scene");
  generate->add_flag("--skip-verify", gen.skip_verify, "skip output consistency checks");

  TrainOpts tr;
  auto* train_cmd = app.add_subcommand("train", "Train a refinement model");
  train_cmd->add_option("--dataset", tr.dataset, "dataset directory")->required();
  train_cmd->add_option("--config", tr.config, "training config (key = value lines)");
  train_cmd->add_option("--out", tr.out, "checkpoint output path");
  auto* tr_seed = train_cmd->add_option("--seed", tr.seed,
                                        "override both run seed and corruption seed");
  train_cmd->add_option("--frames", tr.frames, "window length override");
  train_cmd->add_option("--joints", tr.joints, "joint count override");

  RefineOpts rf;
  auto* refine_cmd = app.add_subcommand("refine", "Refine stored sequences");
  refine_cmd->add_option("--model", rf.model, "model checkpoint")->required();
  refine_cmd->add_option("--in,--dataset", rf.in, "input dataset directory")->required();
  refine_cmd->add_option("--out", rf.out, "output dataset directory")->required();

  EvalOpts ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model against ground truth");
  eval_cmd->add_option("--model", ev.model, "model checkpoint")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "dataset directory")->required();
  eval_cmd->add_option("--out", ev.out, "report path (default: stdout)");
  eval_cmd->add_option("--format", ev.format, "csv or table");
  eval_cmd->add_option("--subjects", ev.subjects,
                       "subjects to score (default: the checkpoint's val split)")
      ->delimiter(',');
  auto* ev_seed = eval_cmd->add_option("--seed", ev.seed, "corruption seed override");

  GraphcheckOpts gc;
  auto* graph_cmd = app.add_subcommand("graphcheck", "Inspect the pose graph");
  graph_cmd->add_option("--dataset", gc.dataset,
                        "dataset directory whose topology to use (default: built-in)");
  graph_cmd->add_option("--frames", gc.frames, "window length");
  graph_cmd->add_option("--joints", gc.joints, "expected joint count");
  graph_cmd->add_option("--out", gc.out, "write the report here instead of stdout");
  graph_cmd->add_option("--format", gc.format, "summary or full");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (train_cmd->parsed()) {
      tr.seed_set = tr_seed->count() > 0;
      return cmd_train(tr);
    }
    if (refine_cmd->parsed()) return cmd_refine(rf);
    if (eval_cmd->parsed()) {
      ev.seed_set = ev_seed->count() > 0;
      return cmd_eval(ev);
    }
    if (graph_cmd->parsed()) return cmd_graphcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
