#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "spotting/io.hpp"
#include "spotting/rng.hpp"

using namespace spotting;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("spotting-test-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace

TEST_CASE("checkpoint round trip preserves parameters and config") {
  TempDir dir;
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.model_dim = 8;
  cfg.ff_dim = 16;
  cfg.num_queries = 4;
  cfg.num_classes = 2;
  cfg.clip_frames = 16;
  ModelParams params = init_params(cfg, 77);
  const std::string path = dir.file("model.ckpt");
  io::save_checkpoint(params, path);
  CHECK(fs::exists(path + ".json"));

  ModelParams loaded = io::load_checkpoint(path);
  CHECK(loaded.config.model_dim == cfg.model_dim);
  CHECK(loaded.config.clip_frames == cfg.clip_frames);
  REQUIRE(loaded.params.size() == params.params.size());
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    CHECK(loaded.params[i].name == params.params[i].name);
    CHECK(loaded.params[i].shape == params.params[i].shape);
    CHECK(loaded.params[i].value == params.params[i].value);  // bit-exact
  }
}

TEST_CASE("checkpoint loader rejects wrong magic") {
  TempDir dir;
  const std::string path = dir.file("bogus.ckpt");
  std::ofstream(path) << "not a checkpoint";
  CHECK_THROWS_AS(io::load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(io::load_checkpoint(dir.file("missing.ckpt")),
                  std::runtime_error);
}

TEST_CASE("dataset round trip with precise and noisy labels") {
  TempDir dir;
  SynthConfig cfg;
  cfg.frames = 16;
  cfg.num_classes = 2;
  cfg.feat_dim = 4;
  cfg.min_event_separation = 4;
  cfg.seed = 5;
  Dataset precise = generate(cfg, 5);
  Dataset noisy = precise;
  for (std::size_t ci = 0; ci < noisy.clips.size(); ++ci)
    noisy.clips[ci].labels = perturb_labels(precise.clips[ci].labels, 1.0,
                                            cfg.frames, derive_seed(9, ci));
  const std::string split = dir.file("trainsplit");
  io::save_dataset(precise, split, &noisy, 1.0);
  CHECK(io::dataset_has_noisy_labels(split));

  Dataset back = io::load_dataset(split, false);
  Dataset back_noisy = io::load_dataset(split, true);
  REQUIRE(back.clips.size() == precise.clips.size());
  CHECK(back.config.frames == cfg.frames);
  CHECK(back.config.num_classes == cfg.num_classes);
  for (std::size_t ci = 0; ci < precise.clips.size(); ++ci) {
    CHECK(back.clips[ci].features.data == precise.clips[ci].features.data);
    CHECK(back_noisy.clips[ci].features.data ==
          precise.clips[ci].features.data);
    REQUIRE(back.clips[ci].labels.size() == precise.clips[ci].labels.size());
    for (std::size_t j = 0; j < precise.clips[ci].labels.size(); ++j) {
      CHECK(back.clips[ci].labels[j].frame_index ==
            precise.clips[ci].labels[j].frame_index);
      CHECK(back.clips[ci].labels[j].class_vector ==
            precise.clips[ci].labels[j].class_vector);
      CHECK(back_noisy.clips[ci].labels[j].frame_index ==
            noisy.clips[ci].labels[j].frame_index);
    }
  }
}

TEST_CASE("dataset without noisy labels refuses a noisy load") {
  TempDir dir;
  SynthConfig cfg;
  cfg.frames = 16;
  cfg.num_classes = 2;
  cfg.feat_dim = 4;
  cfg.min_event_separation = 4;
  Dataset data = generate(cfg, 2);
  const std::string split = dir.file("clean");
  io::save_dataset(data, split);
  CHECK_FALSE(io::dataset_has_noisy_labels(split));
  CHECK_THROWS_AS(io::load_dataset(split, true), std::runtime_error);
}

TEST_CASE("labels-only loader reads what save_dataset wrote") {
  TempDir dir;
  SynthConfig cfg;
  cfg.frames = 16;
  cfg.num_classes = 2;
  cfg.feat_dim = 4;
  cfg.min_event_separation = 4;
  cfg.seed = 12;
  Dataset data = generate(cfg, 3);
  const std::string split = dir.file("labels-split");
  io::save_dataset(data, split);
  auto labels = io::load_labels((fs::path(split) / "labels.json").string());
  REQUIRE(labels.size() == 3);
  for (std::size_t ci = 0; ci < 3; ++ci) {
    REQUIRE(labels[ci].size() == data.clips[ci].labels.size());
    for (std::size_t j = 0; j < labels[ci].size(); ++j)
      CHECK(labels[ci][j].frame_index ==
            data.clips[ci].labels[j].frame_index);
  }
}

TEST_CASE("train log JSONL round trip") {
  TempDir dir;
  std::vector<EpochRecord> log(2);
  log[0].epoch = 0;
  log[0].learning_rate_transformer = 1e-4;
  log[0].total_loss = 1.25;
  log[0].class_loss = 1.0;
  log[0].time_loss = 0.025;
  log[0].offset_to_train_labels = 2.5;
  log[0].offset_to_precise_labels = 1.75;
  log[0].val_map = {{1, 0.5}, {2, 0.75}};
  log[1].epoch = 1;
  log[1].total_loss = 0.5;
  log[1].offset_to_precise_labels = -1.0;

  const std::string path = dir.file("train.jsonl");
  io::save_train_log(log, path);
  auto back = io::load_train_log(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].epoch == 0);
  CHECK(back[0].total_loss == 1.25);
  CHECK(back[0].offset_to_precise_labels == 1.75);
  CHECK(back[0].val_map.at(2) == 0.75);
  CHECK(back[1].offset_to_precise_labels == -1.0);
  CHECK(back[1].val_map.empty());

  // one JSON object per line
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.front() == '{');
    CHECK(line.back() == '}');
  }
  CHECK(lines == 2);
}

TEST_CASE("detections CSV round trip and header") {
  TempDir dir;
  std::vector<std::pair<std::string, std::vector<Detection>>> dets;
  dets.push_back({"vid-a", {{10, 0, 0.875}, {20, 2, 0.03125}}});
  dets.push_back({"vid-b", {}});
  const std::string path = dir.file("dets.csv");
  io::save_detections_csv(dets, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "video_id,frame,class,score");

  auto back = io::load_detections_csv(path);
  REQUIRE(back.size() >= 1);
  CHECK(back[0].first == "vid-a");
  REQUIRE(back[0].second.size() == 2);
  CHECK(back[0].second[0].frame == 10);
  CHECK(back[0].second[0].cls == 0);
  CHECK(back[0].second[0].score == 0.875);
  CHECK(back[0].second[1].score == 0.03125);
}

TEST_CASE("report JSON round trip") {
  TempDir dir;
  EvalReport r;
  r.map[1] = 0.5;
  r.map[2] = 0.625;
  r.per_class_ap[1][0] = 0.25;
  r.per_class_ap[1][2] = 0.75;
  r.per_class_ap[2][0] = 0.5;
  r.per_class_ap[2][2] = 0.75;
  r.true_positives[1] = 7;
  r.true_positives[2] = 9;
  r.false_positives[1] = 3;
  r.false_positives[2] = 1;
  r.mean_abs_offset[1] = 0.5;
  r.mean_abs_offset[2] = 0.75;
  const std::string path = dir.file("report.json");
  io::save_report(r, path);
  EvalReport back = io::load_report(path);
  CHECK(back.map == r.map);
  CHECK(back.per_class_ap == r.per_class_ap);
  CHECK(back.true_positives == r.true_positives);
  CHECK(back.false_positives == r.false_positives);
  CHECK(back.mean_abs_offset == r.mean_abs_offset);
}

TEST_CASE("manifests record the command and configuration") {
  TempDir dir;
  const std::string path = dir.file("manifest.json");
  io::write_manifest("train", "{\"epochs\":30}", 12.5, path);
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(content.find("\"command\"") != std::string::npos);
  CHECK(content.find("\"train\"") != std::string::npos);
  CHECK(content.find("\"epochs\"") != std::string::npos);
  CHECK(content.find("12.5") != std::string::npos);
}
