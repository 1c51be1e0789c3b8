// Command-line surface for the spotting library: dataset generation,
// training, evaluation, and analysis exports with reproducible manifests.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spotting/io.hpp"
#include "spotting/rng.hpp"
#include "spotting/trainer.hpp"

using namespace spotting;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string output_root() {
  const char* root = std::getenv("SPOTTING_OUT_ROOT");
  return root != nullptr ? std::string(root) : std::string(".");
}

std::string resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(output_root()) / p).string();
}

struct SynthFlags {
  SynthConfig config;
  double sigma = 0.0;
  int train_clips = 800;
  int val_clips = 64;
  int test_clips = 64;

  void attach(CLI::App* cmd) {
    cmd->add_option("--frames", config.frames, "Frames per clip");
    cmd->add_option("--classes", config.num_classes, "Number of event classes");
    cmd->add_option("--feat-dim", config.feat_dim, "Feature width per frame");
    cmd->add_option("--events-min", config.events_min, "Minimum events per clip");
    cmd->add_option("--events-max", config.events_max, "Maximum events per clip");
    cmd->add_option("--signature-width", config.signature_width,
                    "Temporal support of an event signature (odd)");
    cmd->add_option("--signature-gain", config.signature_gain,
                    "Signature magnitude");
    cmd->add_option("--noise-std", config.background_noise_std,
                    "Background noise standard deviation");
    cmd->add_option("--min-separation", config.min_event_separation,
                    "Minimum frames between events");
    cmd->add_option("--seed", config.seed, "Dataset seed");
    cmd->add_option("--sigma", sigma,
                    "Gaussian label noise (frames) applied to training labels");
    cmd->add_option("--train-clips", train_clips, "Training clips");
    cmd->add_option("--val-clips", val_clips, "Validation clips");
    cmd->add_option("--test-clips", test_clips, "Test clips");
  }

  json to_json() const {
    return json{{"frames", config.frames},
                {"classes", config.num_classes},
                {"feat_dim", config.feat_dim},
                {"events_min", config.events_min},
                {"events_max", config.events_max},
                {"signature_width", config.signature_width},
                {"signature_gain", config.signature_gain},
                {"noise_std", config.background_noise_std},
                {"min_separation", config.min_event_separation},
                {"seed", config.seed},
                {"sigma", sigma},
                {"train_clips", train_clips},
                {"val_clips", val_clips},
                {"test_clips", test_clips}};
  }
};

struct ModelFlags {
  ModelConfig config;

  void attach(CLI::App* cmd) {
    cmd->add_option("--nq", config.num_queries, "Number of queries");
    cmd->add_option("--model-dim", config.model_dim, "Transformer width");
    cmd->add_option("--ff-dim", config.ff_dim, "Feed-forward width");
    cmd->add_option("--heads", config.num_heads, "Attention heads");
    cmd->add_option("--enc-layers", config.num_encoder_layers,
                    "Encoder layers");
    cmd->add_option("--dec-layers", config.num_decoder_layers,
                    "Decoder layers");
  }

  json to_json() const {
    return json{{"nq", config.num_queries},
                {"model_dim", config.model_dim},
                {"ff_dim", config.ff_dim},
                {"heads", config.num_heads},
                {"enc_layers", config.num_encoder_layers},
                {"dec_layers", config.num_decoder_layers}};
  }
};

int cmd_generate(const SynthFlags& flags, const std::string& out) {
  const auto start = Clock::now();
  const std::string dir = resolve_out(out);
  fs::create_directories(dir);

  struct Split {
    const char* name;
    int clips;
    std::uint64_t salt;
  };
  const Split splits[] = {{"train", flags.train_clips, 1},
                          {"val", flags.val_clips, 2},
                          {"test", flags.test_clips, 3}};
  for (const Split& split : splits) {
    SynthConfig cfg = flags.config;
    cfg.signature_seed = flags.config.seed;  // events look alike across splits
    cfg.seed = derive_seed(flags.config.seed, split.salt);
    Dataset precise = generate(cfg, static_cast<std::size_t>(split.clips));
    const std::string split_dir = (fs::path(dir) / split.name).string();
    if (std::string(split.name) == "train" && flags.sigma > 0.0) {
      Dataset noisy = precise;
      for (std::size_t ci = 0; ci < noisy.clips.size(); ++ci)
        noisy.clips[ci].labels =
            perturb_labels(precise.clips[ci].labels, flags.sigma,
                           cfg.frames, derive_seed(cfg.seed, 0xA0 + ci));
      io::save_dataset(precise, split_dir, &noisy, flags.sigma);
    } else {
      io::save_dataset(precise, split_dir);
    }
  }
  io::write_manifest("generate", flags.to_json().dump(),
                     std::chrono::duration<double>(Clock::now() - start)
                         .count(),
                     (fs::path(dir) / "manifest.json").string());
  std::cout << "wrote " << dir << "\n";
  return 0;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"batch_size", c.batch_size},
              {"warmup_epochs", c.warmup_epochs},
              {"lr_embedder", c.lr_embedder},
              {"lr_transformer", c.lr_transformer},
              {"weight_decay", c.weight_decay},
              {"lambda_time", c.lambda_time},
              {"matching", to_string(c.matching)},
              {"mixup", c.use_mixup},
              {"mixup_alpha", c.mixup_alpha},
              {"dilation", c.use_dilation},
              {"aux_losses", c.aux_losses},
              {"seed", c.seed}};
}

int cmd_train(const std::string& data_dir, const std::string& out,
              ModelFlags model_flags, TrainConfig train_cfg,
              const std::string& matching, bool no_aux, bool use_val) {
  const auto start = Clock::now();
  train_cfg.matching = matching_mode_from_string(matching);
  train_cfg.aux_losses = !no_aux;

  const std::string train_split = (fs::path(data_dir) / "train").string();
  const bool has_noisy = io::dataset_has_noisy_labels(train_split);
  Dataset data = io::load_dataset(train_split, has_noisy);
  Dataset precise = has_noisy ? io::load_dataset(train_split, false) : data;
  Dataset val;
  const std::string val_split = (fs::path(data_dir) / "val").string();
  const bool with_val = use_val && fs::exists(val_split);
  if (with_val) val = io::load_dataset(val_split, false);

  ModelConfig mc = model_flags.config;
  mc.feat_dim = data.config.feat_dim;
  mc.num_classes = data.config.num_classes;
  mc.clip_frames = data.config.frames;

  TrainResult result = train(mc, data, has_noisy ? &precise : nullptr,
                             with_val ? &val : nullptr, train_cfg);

  const std::string dir = resolve_out(out);
  fs::create_directories(dir);
  io::save_checkpoint(result.params,
                      (fs::path(dir) / "model.ckpt").string());
  io::save_train_log(result.log,
                     (fs::path(dir) / "train_log.jsonl").string());
  json cfg = train_config_to_json(train_cfg);
  cfg["model"] = model_flags.to_json();
  cfg["data"] = data_dir;
  cfg["diverged"] = result.diverged;
  io::write_manifest("train", cfg.dump(),
                     std::chrono::duration<double>(Clock::now() - start)
                         .count(),
                     (fs::path(dir) / "manifest.json").string());
  if (result.diverged) {
    std::cerr << "error: training diverged; last stable checkpoint kept\n";
    return 2;
  }
  std::cout << "wrote " << dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& detections_csv, const std::string& labels_json,
             std::vector<int> deltas, bool no_nms, double threshold,
             int num_classes_hint, const std::string& out) {
  const auto start = Clock::now();
  if (deltas.empty()) deltas = {1, 2};
  std::sort(deltas.begin(), deltas.end());

  EvalReport report;
  json cfg{{"deltas", deltas}, {"nms", !no_nms}, {"threshold", threshold}};
  if (!checkpoint.empty()) {
    if (data_dir.empty())
      throw std::invalid_argument("eval: --data is required with --checkpoint");
    ModelParams params = io::load_checkpoint(checkpoint);
    const std::string split = (fs::path(data_dir) / "test").string();
    Dataset data = io::load_dataset(fs::exists(split) ? split : data_dir);
    InferOptions options;
    options.apply_nms = !no_nms;
    options.detection_threshold = threshold;
    report = evaluate_dataset(params, data, deltas, options);
    cfg["checkpoint"] = checkpoint;
    cfg["data"] = data_dir;
  } else if (!detections_csv.empty() && !labels_json.empty()) {
    auto per_video = io::load_detections_csv(detections_csv);
    auto labels = io::load_labels(labels_json);
    std::vector<EvalInstance> instances(labels.size());
    int num_classes = num_classes_hint;
    for (std::size_t ci = 0; ci < labels.size(); ++ci) {
      instances[ci].ground_truth = to_eval_gt(labels[ci]);
      for (const auto& label : labels[ci])
        num_classes = std::max(num_classes,
                               static_cast<int>(label.class_vector.size()));
    }
    for (const auto& [video, dets] : per_video) {
      if (video.rfind("clip", 0) != 0)
        throw std::invalid_argument("eval: unknown video id " + video);
      const std::size_t ci = std::stoul(video.substr(4));
      if (ci >= instances.size())
        throw std::invalid_argument("eval: video id beyond labels: " + video);
      auto& inst = instances[ci];
      inst.detections.insert(inst.detections.end(), dets.begin(), dets.end());
      for (const Detection& d : dets)
        num_classes = std::max(num_classes, d.cls + 1);
    }
    report = map_at(instances, num_classes, deltas);
    cfg["detections"] = detections_csv;
    cfg["labels"] = labels_json;
  } else {
    throw std::invalid_argument(
        "eval: need --checkpoint with --data, or --detections with --labels");
  }

  const std::string path = resolve_out(out);
  if (fs::path(path).has_parent_path())
    fs::create_directories(fs::path(path).parent_path());
  io::save_report(report, path);
  io::write_manifest("eval", cfg.dump(),
                     std::chrono::duration<double>(Clock::now() - start)
                         .count(),
                     path + ".manifest.json");
  for (int delta : deltas)
    std::cout << "mAP@" << delta << " = " << report.map.at(delta) << "\n";
  return 0;
}

int cmd_analyze(const std::string& log_path,
                const std::vector<std::string>& report_paths,
                const std::string& checkpoint, const std::string& data_dir,
                int gap_delta, const std::string& out) {
  const auto start = Clock::now();
  const std::string dir = resolve_out(out);
  fs::create_directories(dir);
  json cfg{{"outputs", json::array()}};

  if (!log_path.empty()) {
    auto log = io::load_train_log(log_path);
    std::ofstream f(fs::path(dir) / "offsets.csv");
    f << "epoch,offset_to_train_labels,offset_to_precise_labels\n";
    for (const EpochRecord& rec : log) {
      f << rec.epoch << "," << rec.offset_to_train_labels << ",";
      if (rec.offset_to_precise_labels >= 0.0)
        f << rec.offset_to_precise_labels;
      f << "\n";
    }
    cfg["outputs"].push_back("offsets.csv");
  }

  if (!report_paths.empty()) {
    std::ofstream f(fs::path(dir) / "map_vs_delta.csv");
    f << "report,delta,map\n";
    for (const std::string& path : report_paths) {
      EvalReport report = io::load_report(path);
      for (const auto& [delta, value] : report.map)
        f << fs::path(path).filename().string() << "," << delta << ","
          << value << "\n";
    }
    cfg["outputs"].push_back("map_vs_delta.csv");
  }

  if (!checkpoint.empty() && !data_dir.empty()) {
    ModelParams params = io::load_checkpoint(checkpoint);
    const std::string split = (fs::path(data_dir) / "test").string();
    Dataset data = io::load_dataset(fs::exists(split) ? split : data_dir);
    const int num_classes = params.config.num_classes;
    std::vector<double> sums(static_cast<std::size_t>(num_classes), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
    for (const Clip& clip : data.clips) {
      Matrix scores = infer_scores(params, clip.features, {});
      auto gaps = score_gap(scores, to_eval_gt(clip.labels), num_classes,
                            gap_delta);
      for (int k = 0; k < num_classes; ++k)
        if (!std::isnan(gaps[static_cast<std::size_t>(k)])) {
          sums[static_cast<std::size_t>(k)] +=
              gaps[static_cast<std::size_t>(k)];
          ++counts[static_cast<std::size_t>(k)];
        }
    }
    std::ofstream f(fs::path(dir) / "score_gaps.csv");
    f << "class,mean_score_gap,samples\n";
    for (int k = 0; k < num_classes; ++k) {
      f << k << ",";
      if (counts[static_cast<std::size_t>(k)] > 0)
        f << sums[static_cast<std::size_t>(k)] /
                 counts[static_cast<std::size_t>(k)];
      f << "," << counts[static_cast<std::size_t>(k)] << "\n";
    }
    cfg["outputs"].push_back("score_gaps.csv");
  }

  if (cfg["outputs"].empty())
    throw std::invalid_argument(
        "analyze: provide --log, --report, or --checkpoint with --data");

  cfg["log"] = log_path;
  cfg["reports"] = report_paths;
  cfg["checkpoint"] = checkpoint;
  cfg["data"] = data_dir;
  io::write_manifest("analyze", cfg.dump(),
                     std::chrono::duration<double>(Clock::now() - start)
                         .count(),
                     (fs::path(dir) / "manifest.json").string());
  std::cout << "wrote " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event spotting experiments: generate / train / eval / analyze"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate synthetic datasets");
  SynthFlags synth_flags;
  std::string gen_out = "dataset";
  synth_flags.attach(gen);
  gen->add_option("--out", gen_out, "Output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train a spotting model");
  ModelFlags model_flags;
  TrainConfig train_cfg;
  std::string train_data, train_out = "run", matching = "dynamic";
  bool no_aux = false, no_val = false;
  tr->add_option("--data", train_data, "Dataset directory (from generate)")
      ->required();
  tr->add_option("--out", train_out, "Output directory");
  model_flags.attach(tr);
  tr->add_option("--epochs", train_cfg.epochs, "Training epochs");
  tr->add_option("--steps", train_cfg.steps_per_epoch, "Steps per epoch");
  tr->add_option("--batch", train_cfg.batch_size, "Batch size");
  tr->add_option("--warmup", train_cfg.warmup_epochs, "Warmup epochs");
  tr->add_option("--lr-embedder", train_cfg.lr_embedder, "Embedder rate");
  tr->add_option("--lr-transformer", train_cfg.lr_transformer,
                 "Transformer rate");
  tr->add_option("--weight-decay", train_cfg.weight_decay, "Weight decay");
  tr->add_option("--lambda-time", train_cfg.lambda_time,
                 "Time cost/loss weight");
  tr->add_option("--matching", matching,
                 "Label assignment: static, time-only, or dynamic");
  tr->add_flag("--mixup", train_cfg.use_mixup, "Enable MixUp");
  tr->add_option("--mixup-alpha", train_cfg.mixup_alpha, "MixUp alpha");
  tr->add_flag("--dilation", train_cfg.use_dilation, "Enable label dilation");
  tr->add_flag("--no-aux", no_aux, "Disable per-decoder-layer losses");
  tr->add_flag("--no-val", no_val, "Skip per-epoch validation");
  tr->add_option("--seed", train_cfg.seed, "Training seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or detections");
  std::string eval_ckpt, eval_data, eval_dets, eval_labels,
      eval_out = "report.json";
  std::vector<int> eval_deltas;
  bool no_nms = false;
  double threshold = 0.01;
  int classes_hint = 0;
  ev->add_option("--checkpoint", eval_ckpt, "Model checkpoint");
  ev->add_option("--data", eval_data, "Dataset directory");
  ev->add_option("--detections", eval_dets, "External detections CSV");
  ev->add_option("--labels", eval_labels, "Labels JSON for external detections");
  ev->add_option("--delta", eval_deltas, "Frame tolerances (default 1 2)");
  ev->add_flag("--no-nms", no_nms, "Disable soft NMS");
  ev->add_option("--threshold", threshold, "Detection score threshold");
  ev->add_option("--classes", classes_hint, "Class count override");
  ev->add_option("--out", eval_out, "Report path");

  // analyze
  auto* an = app.add_subcommand("analyze", "Export CSV series for plotting");
  std::string an_log, an_ckpt, an_data, an_out = "analysis";
  std::vector<std::string> an_reports;
  int gap_delta = 3;
  an->add_option("--log", an_log, "Training log (JSON lines)");
  an->add_option("--report", an_reports, "Evaluation report(s)");
  an->add_option("--checkpoint", an_ckpt, "Checkpoint for score gaps");
  an->add_option("--data", an_data, "Dataset for score gaps");
  an->add_option("--gap-delta", gap_delta, "Score-gap window (frames)");
  an->add_option("--out", an_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(synth_flags, gen_out);
    if (tr->parsed())
      return cmd_train(train_data, train_out, model_flags, train_cfg,
                       matching, no_aux, !no_val);
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_dets, eval_labels,
                      eval_deltas, no_nms, threshold, classes_hint, eval_out);
    if (an->parsed())
      return cmd_analyze(an_log, an_reports, an_ckpt, an_data, gap_delta,
                         an_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
