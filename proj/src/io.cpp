#include "spotting/io.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spotting::io {

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[8] = {'S', 'P', 'O', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr int kDatasetVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw std::runtime_error("cannot read " + path);
  return is;
}

json config_to_json(const ModelConfig& c) {
  return json{{"feat_dim", c.feat_dim},
              {"model_dim", c.model_dim},
              {"ff_dim", c.ff_dim},
              {"num_heads", c.num_heads},
              {"num_encoder_layers", c.num_encoder_layers},
              {"num_decoder_layers", c.num_decoder_layers},
              {"num_queries", c.num_queries},
              {"num_classes", c.num_classes},
              {"clip_frames", c.clip_frames}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.feat_dim = j.at("feat_dim");
  c.model_dim = j.at("model_dim");
  c.ff_dim = j.at("ff_dim");
  c.num_heads = j.at("num_heads");
  c.num_encoder_layers = j.at("num_encoder_layers");
  c.num_decoder_layers = j.at("num_decoder_layers");
  c.num_queries = j.at("num_queries");
  c.num_classes = j.at("num_classes");
  c.clip_frames = j.at("clip_frames");
  return c;
}

json synth_config_to_json(const SynthConfig& c) {
  return json{{"frames", c.frames},
              {"num_classes", c.num_classes},
              {"feat_dim", c.feat_dim},
              {"events_min", c.events_min},
              {"events_max", c.events_max},
              {"signature_width", c.signature_width},
              {"signature_gain", c.signature_gain},
              {"background_noise_std", c.background_noise_std},
              {"min_event_separation", c.min_event_separation},
              {"seed", c.seed},
              {"signature_seed", c.signature_seed}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  c.frames = j.at("frames");
  c.num_classes = j.at("num_classes");
  c.feat_dim = j.at("feat_dim");
  c.events_min = j.at("events_min");
  c.events_max = j.at("events_max");
  c.signature_width = j.at("signature_width");
  c.signature_gain = j.at("signature_gain");
  c.background_noise_std = j.at("background_noise_std");
  c.min_event_separation = j.at("min_event_separation");
  c.seed = j.at("seed");
  c.signature_seed = j.value("signature_seed", std::uint64_t{0});
  return c;
}

json labels_to_json(const std::vector<GroundTruthLabel>& labels) {
  json arr = json::array();
  for (const auto& label : labels) {
    arr.push_back(json{{"frame", label.frame_index},
                       {"time", label.time_norm},
                       {"classes", label.class_vector}});
  }
  return arr;
}

std::vector<GroundTruthLabel> labels_from_json(const json& arr) {
  std::vector<GroundTruthLabel> labels;
  for (const auto& j : arr) {
    GroundTruthLabel label;
    label.frame_index = j.at("frame");
    label.time_norm = j.at("time");
    label.class_vector = j.at("classes").get<std::vector<double>>();
    labels.push_back(std::move(label));
  }
  return labels;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  auto os = open_out(path, true);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(os, kCheckpointVersion);
  write_u64(os, params.params.size());
  for (const Param& p : params.params) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t e : p.shape) write_u64(os, e);
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  json sidecar{{"version", kCheckpointVersion},
               {"model", config_to_json(params.config)}};
  open_out(path + ".json") << sidecar.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::string& path) {
  json sidecar = json::parse(open_in(path + ".json"));
  ModelParams params;
  params.config = config_from_json(sidecar.at("model"));

  auto is = open_in(path, true);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  if (read_u32(is) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }
  const std::uint64_t count = read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    Param p;
    const std::uint32_t name_len = read_u32(is);
    p.name.resize(name_len);
    is.read(p.name.data(), name_len);
    const std::uint32_t ndim = read_u32(is);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      p.shape.push_back(static_cast<std::size_t>(read_u64(is)));
      numel *= p.shape.back();
    }
    p.value.resize(numel);
    is.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!is) throw std::runtime_error("truncated checkpoint " + path);
    params.index[p.name] = params.params.size();
    params.params.push_back(std::move(p));
  }
  return params;
}

void save_dataset(const Dataset& data, const std::string& dir,
                  const Dataset* noisy, double sigma) {
  std::filesystem::create_directories(dir);
  auto bin = open_out(dir + "/features.bin", true);
  for (const Clip& clip : data.clips) {
    bin.write(reinterpret_cast<const char*>(clip.features.data.data()),
              static_cast<std::streamsize>(clip.features.data.size() *
                                           sizeof(double)));
  }
  json j{{"version", kDatasetVersion},
         {"config", synth_config_to_json(data.config)},
         {"seed", data.config.seed},
         {"sigma", sigma}};
  json clips = json::array();
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    json c{{"id", "clip" + std::to_string(i)},
           {"frames", data.config.frames},
           {"labels", labels_to_json(data.clips[i].labels)}};
    if (noisy) c["labels_noisy"] = labels_to_json(noisy->clips[i].labels);
    clips.push_back(std::move(c));
  }
  j["clips"] = std::move(clips);
  open_out(dir + "/labels.json") << j.dump(2) << "\n";
}

bool dataset_has_noisy_labels(const std::string& dir) {
  json j = json::parse(open_in(dir + "/labels.json"));
  return !j.at("clips").empty() && j.at("clips")[0].contains("labels_noisy");
}

Dataset load_dataset(const std::string& dir, bool noisy_labels) {
  json j = json::parse(open_in(dir + "/labels.json"));
  Dataset ds;
  ds.config = synth_config_from_json(j.at("config"));
  auto bin = open_in(dir + "/features.bin", true);
  for (const auto& cj : j.at("clips")) {
    Clip clip;
    clip.features = Matrix(static_cast<std::size_t>(ds.config.frames),
                           static_cast<std::size_t>(ds.config.feat_dim));
    bin.read(reinterpret_cast<char*>(clip.features.data.data()),
             static_cast<std::streamsize>(clip.features.data.size() *
                                          sizeof(double)));
    if (!bin) throw std::runtime_error("truncated features.bin in " + dir);
    const char* key = noisy_labels ? "labels_noisy" : "labels";
    if (noisy_labels && !cj.contains("labels_noisy")) {
      throw std::runtime_error("dataset in " + dir + " has no noisy labels");
    }
    clip.labels = labels_from_json(cj.at(key));
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

std::vector<std::vector<GroundTruthLabel>> load_labels(
    const std::string& path) {
  json j = json::parse(open_in(path));
  std::vector<std::vector<GroundTruthLabel>> out;
  for (const auto& cj : j.at("clips"))
    out.push_back(labels_from_json(cj.at("labels")));
  return out;
}

void save_train_log(const std::vector<EpochRecord>& log,
                    const std::string& path) {
  auto os = open_out(path);
  for (const EpochRecord& r : log) {
    json j{{"epoch", r.epoch},
           {"lr", r.learning_rate_transformer},
           {"total_loss", r.total_loss},
           {"class_loss", r.class_loss},
           {"time_loss", r.time_loss},
           {"offset_to_train_labels", r.offset_to_train_labels},
           {"offset_to_precise_labels", r.offset_to_precise_labels}};
    if (!r.val_map.empty()) {
      json vm;
      for (const auto& [delta, v] : r.val_map)
        vm[std::to_string(delta)] = v;
      j["val_map"] = std::move(vm);
    }
    os << j.dump() << "\n";
  }
}

std::vector<EpochRecord> load_train_log(const std::string& path) {
  auto is = open_in(path);
  std::vector<EpochRecord> log;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch");
    r.learning_rate_transformer = j.at("lr");
    r.total_loss = j.at("total_loss");
    r.class_loss = j.at("class_loss");
    r.time_loss = j.at("time_loss");
    r.offset_to_train_labels = j.at("offset_to_train_labels");
    r.offset_to_precise_labels = j.at("offset_to_precise_labels");
    if (j.contains("val_map")) {
      for (const auto& [k, v] : j.at("val_map").items())
        r.val_map[std::stoi(k)] = v;
    }
    log.push_back(std::move(r));
  }
  return log;
}

void save_detections_csv(
    const std::vector<std::pair<std::string, std::vector<Detection>>>& dets,
    const std::string& path) {
  auto os = open_out(path);
  os << "video_id,frame,class,score\n";
  os.precision(17);
  for (const auto& [video, list] : dets)
    for (const Detection& d : list)
      os << video << "," << d.frame << "," << d.cls << "," << d.score << "\n";
}

std::vector<std::pair<std::string, std::vector<Detection>>>
load_detections_csv(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || line != "video_id,frame,class,score") {
    throw std::runtime_error("bad detections CSV header in " + path);
  }
  std::vector<std::pair<std::string, std::vector<Detection>>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string video, frame, cls, score;
    if (!std::getline(ss, video, ',') || !std::getline(ss, frame, ',') ||
        !std::getline(ss, cls, ',') || !std::getline(ss, score)) {
      throw std::runtime_error("bad detections CSV row: " + line);
    }
    if (out.empty() || out.back().first != video) out.push_back({video, {}});
    out.back().second.push_back(
        {std::stoi(frame), std::stoi(cls), std::stod(score)});
  }
  return out;
}

void save_report(const EvalReport& report, const std::string& path) {
  json j{{"version", 1}};
  json per_delta;
  for (const auto& [delta, map] : report.map) {
    json d{{"map", map},
           {"true_positives", report.true_positives.at(delta)},
           {"false_positives", report.false_positives.at(delta)},
           {"mean_abs_offset", report.mean_abs_offset.at(delta)}};
    json ap;
    for (const auto& [cls, v] : report.per_class_ap.at(delta))
      ap[std::to_string(cls)] = v;
    d["per_class_ap"] = std::move(ap);
    per_delta[std::to_string(delta)] = std::move(d);
  }
  j["deltas"] = std::move(per_delta);
  open_out(path) << j.dump(2) << "\n";
}

EvalReport load_report(const std::string& path) {
  json j = json::parse(open_in(path));
  EvalReport report;
  for (const auto& [dk, d] : j.at("deltas").items()) {
    const int delta = std::stoi(dk);
    report.map[delta] = d.at("map");
    report.true_positives[delta] = d.at("true_positives");
    report.false_positives[delta] = d.at("false_positives");
    report.mean_abs_offset[delta] = d.at("mean_abs_offset");
    for (const auto& [ck, v] : d.at("per_class_ap").items())
      report.per_class_ap[delta][std::stoi(ck)] = v;
  }
  return report;
}

void write_manifest(const std::string& command, const std::string& config_json,
                    double duration_seconds, const std::string& path) {
  json j{{"artifact_version", 1},
         {"command", command},
         {"config", json::parse(config_json)},
         {"duration_seconds", duration_seconds}};
  open_out(path) << j.dump(2) << "\n";
}

}  // namespace spotting::io
