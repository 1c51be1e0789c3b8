#include <doctest.h>

#include <cmath>

#include "spotting/loss.hpp"
#include "spotting/rng.hpp"
#include "spotting/trainer.hpp"

using namespace spotting;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.feat_dim = 4;
  c.model_dim = 8;
  c.ff_dim = 16;
  c.num_heads = 2;
  c.num_encoder_layers = 1;
  c.num_decoder_layers = 1;
  c.num_queries = 4;
  c.num_classes = 2;
  c.clip_frames = 16;
  return c;
}

SynthConfig tiny_data(ModelConfig m, std::uint64_t seed) {
  SynthConfig s;
  s.frames = m.clip_frames;
  s.num_classes = m.num_classes;
  s.feat_dim = m.feat_dim;
  s.events_min = 1;
  s.events_max = 2;
  s.min_event_separation = 4;
  s.seed = seed;
  return s;
}

// single-scalar quadratic as a ModelParams shell for optimizer tests
ModelParams scalar_param(double x) {
  ModelParams p;
  p.params.push_back({"w", {1}, {x}});
  p.index["w"] = 0;
  return p;
}

}  // namespace

TEST_CASE("matching mode names round-trip") {
  for (auto m : {MatchingMode::kStatic, MatchingMode::kTimeOnly,
                 MatchingMode::kDynamic})
    CHECK(matching_mode_from_string(to_string(m)) == m);
  CHECK(matching_mode_from_string("time_only") == MatchingMode::kTimeOnly);
  CHECK_THROWS_AS(matching_mode_from_string("hungarian"),
                  std::invalid_argument);
}

TEST_CASE("learning rate schedule endpoints and shape") {
  TrainConfig c;
  c.epochs = 30;
  c.warmup_epochs = 3;
  const double base = 1e-3;
  CHECK(lr_at(0, c, base) == doctest::Approx(base / 3.0));
  CHECK(lr_at(1, c, base) == doctest::Approx(2.0 * base / 3.0));
  CHECK(lr_at(2, c, base) == doctest::Approx(base));
  CHECK(lr_at(3, c, base) == doctest::Approx(base));  // cosine at progress 0
  // halfway through decay: epoch 3 + 27/2
  const double mid = lr_at(16, c, base);
  CHECK(mid < base);
  CHECK(lr_at(29, c, base) < 0.01 * base);
  for (int e = 3; e < 29; ++e) CHECK(lr_at(e, c, base) >= lr_at(e + 1, c, base));
  CHECK_THROWS_AS(lr_at(30, c, base), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(-1, c, base), std::invalid_argument);
}

TEST_CASE("adamw: zero gradient applies only decoupled decay") {
  ModelParams p = scalar_param(2.0);
  AdamW opt;
  opt.step(p, {{0.0}}, {0.1}, 0.5);
  // zero gradient keeps moments at zero; update is pure decay
  CHECK(p.params[0].value[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
  opt.step(p, {{0.0}}, {0.1}, 0.0);
  CHECK(p.params[0].value[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("adamw first step moves by about lr against the gradient sign") {
  ModelParams p = scalar_param(0.0);
  AdamW opt;
  opt.step(p, {{3.7}}, {0.05}, 0.0);
  // bias-corrected first step is -lr * g / (|g| + eps) ~= -lr
  CHECK(p.params[0].value[0] == doctest::Approx(-0.05).epsilon(1e-6));
}

TEST_CASE("adamw minimizes a quadratic") {
  ModelParams p = scalar_param(5.0);
  AdamW opt;
  for (int i = 0; i < 200; ++i) {
    const double x = p.params[0].value[0];
    opt.step(p, {{2.0 * (x - 1.5)}}, {0.1}, 0.0);
  }
  CHECK(p.params[0].value[0] == doctest::Approx(1.5).epsilon(1e-2));
}

TEST_CASE("adamw rejects non-finite gradients and shape mismatches") {
  ModelParams p = scalar_param(1.0);
  AdamW opt;
  CHECK_THROWS_AS(opt.step(p, {{std::nan("")}}, {0.1}, 0.0),
                  std::runtime_error);
  CHECK_THROWS_AS(opt.step(p, {{1.0, 2.0}}, {0.1}, 0.0),
                  std::invalid_argument);
}

TEST_CASE("static mode binds labels to fixed time-grid anchors") {
  const int T = 100;
  std::vector<GroundTruthLabel> gts(2);
  gts[0].class_vector = {1, 0};
  gts[0].frame_index = 20;  // grid position (20-1)*2/99 = 0.38 -> query 0
  gts[0].time_norm = 0.20;
  gts[1].class_vector = {0, 1};
  gts[1].frame_index = 60;  // grid position (60-1)*2/99 = 1.19 -> query 1
  gts[1].time_norm = 0.60;
  std::vector<Prediction> preds(3);
  for (auto& p : preds) p.scores = {0.5, 0.5};
  // prediction times must not influence the static binding
  preds[0].time_norm = 0.61;
  preds[1].time_norm = 0.19;
  preds[2].time_norm = 0.9;
  Assignment a =
      assign_for_mode(MatchingMode::kStatic, gts, preds, 10.0, T);
  CHECK(a.permutation[0] == 0);
  CHECK(a.permutation[1] == 1);
  CHECK(a.permutation[2] == 2);
  CHECK(a.pairs[2].is_phi);

  // collision: both labels anchor to query 0; second takes the nearest free
  gts[1].frame_index = 10;
  gts[1].time_norm = 0.10;
  Assignment b =
      assign_for_mode(MatchingMode::kStatic, gts, preds, 10.0, T);
  CHECK(b.permutation[0] == 0);
  CHECK(b.permutation[1] == 1);
}

TEST_CASE("with a huge lambda dynamic matching collapses onto time-only") {
  Rng rng(404);
  const int T = 64;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<GroundTruthLabel> gts(2);
    for (auto& g : gts) {
      g.class_vector = {0.0, 0.0};
      g.class_vector[static_cast<std::size_t>(rng.uniform_int(0, 1))] = 1.0;
      g.frame_index = rng.uniform_int(1, T);
      g.time_norm = label_time_norm(g.frame_index, T);
    }
    std::vector<Prediction> preds(4);
    for (auto& p : preds) {
      p.scores = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
      p.time_norm = rng.uniform(0.01, 0.99);
    }
    Assignment dynamic =
        assign_for_mode(MatchingMode::kDynamic, gts, preds, 1e6, T);
    Assignment timeonly =
        assign_for_mode(MatchingMode::kTimeOnly, gts, preds, 1e6, T);
    // the matchings may differ on time-cost ties, but the total time cost
    // of the matched pairs must coincide
    auto matched_time_cost = [](const Assignment& a) {
      double sum = 0.0;
      for (const PairRecord& p : a.pairs)
        if (!p.is_phi) sum += p.time_cost;
      return sum;
    };
    CHECK(matched_time_cost(dynamic) ==
          doctest::Approx(matched_time_cost(timeonly)).epsilon(1e-9));
  }
}

TEST_CASE("zero-epoch training returns the initial parameters") {
  ModelConfig mc = tiny_model();
  Dataset data = generate(tiny_data(mc, 3), 4);
  TrainConfig tc;
  tc.epochs = 0;
  TrainResult r = train(mc, data, nullptr, nullptr, tc);
  CHECK(r.log.empty());
  CHECK_FALSE(r.diverged);
  ModelParams fresh = init_params(mc, tc.seed);
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(r.params.params[i].value == fresh.params[i].value);
}

TEST_CASE("training is deterministic and decreases the loss") {
  ModelConfig mc = tiny_model();
  Dataset data = generate(tiny_data(mc, 11), 8);
  TrainConfig tc;
  tc.epochs = 4;
  tc.steps_per_epoch = 8;
  tc.batch_size = 4;
  tc.warmup_epochs = 1;
  tc.seed = 5;
  TrainResult a = train(mc, data, nullptr, nullptr, tc);
  TrainResult b = train(mc, data, nullptr, nullptr, tc);
  REQUIRE(a.log.size() == 4);
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].total_loss == b.log[e].total_loss);
    CHECK(a.log[e].offset_to_train_labels == b.log[e].offset_to_train_labels);
    CHECK(a.log[e].offset_to_precise_labels == -1.0);
  }
  for (std::size_t i = 0; i < a.params.params.size(); ++i)
    CHECK(a.params.params[i].value == b.params.params[i].value);
  CHECK(a.log.back().total_loss < a.log.front().total_loss);
  CHECK_FALSE(a.diverged);
}

TEST_CASE("precise-label offsets are tracked when the aligned set is given") {
  ModelConfig mc = tiny_model();
  Dataset precise = generate(tiny_data(mc, 21), 6);
  Dataset noisy = precise;
  for (std::size_t ci = 0; ci < noisy.clips.size(); ++ci)
    noisy.clips[ci].labels = perturb_labels(
        precise.clips[ci].labels, 1.5, mc.clip_frames, derive_seed(77, ci));
  TrainConfig tc;
  tc.epochs = 2;
  tc.steps_per_epoch = 4;
  tc.batch_size = 4;
  tc.warmup_epochs = 1;
  TrainResult r = train(mc, noisy, &precise, nullptr, tc);
  for (const EpochRecord& rec : r.log) {
    CHECK(rec.offset_to_precise_labels >= 0.0);
    CHECK(rec.offset_to_train_labels >= 0.0);
  }
}

TEST_CASE("validation mAP is logged per epoch when a val split is given") {
  ModelConfig mc = tiny_model();
  Dataset data = generate(tiny_data(mc, 31), 6);
  Dataset val = generate(tiny_data(mc, 32), 3);
  TrainConfig tc;
  tc.epochs = 2;
  tc.steps_per_epoch = 2;
  tc.batch_size = 2;
  tc.warmup_epochs = 1;
  tc.val_deltas = {1, 2};
  TrainResult r = train(mc, data, nullptr, &val, tc);
  REQUIRE(r.log.size() == 2);
  for (const EpochRecord& rec : r.log) {
    REQUIRE(rec.val_map.count(1) == 1);
    REQUIRE(rec.val_map.count(2) == 1);
    CHECK(rec.val_map.at(1) >= 0.0);
    CHECK(rec.val_map.at(2) >= rec.val_map.at(1) - 1e-12);
  }
}

TEST_CASE("mixup and dilation leave training finite and logged") {
  ModelConfig mc = tiny_model();
  mc.num_queries = 16;  // room for unioned and dilated label sets
  Dataset data = generate(tiny_data(mc, 41), 6);
  TrainConfig tc;
  tc.epochs = 2;
  tc.steps_per_epoch = 4;
  tc.batch_size = 2;
  tc.warmup_epochs = 1;
  tc.use_mixup = true;
  tc.use_dilation = true;
  TrainResult r = train(mc, data, nullptr, nullptr, tc);
  CHECK_FALSE(r.diverged);
  for (const EpochRecord& rec : r.log) {
    CHECK(std::isfinite(rec.total_loss));
    CHECK(rec.offset_to_precise_labels == -1.0);  // disabled under augmentation
  }
}

TEST_CASE("infer_scores fuses sliding windows over a long sequence") {
  ModelConfig mc = tiny_model();
  ModelParams params = init_params(mc, 9);
  Dataset data = generate(tiny_data(mc, 51), 1);
  // stack the clip three times into a 48-frame sequence
  Matrix seq(static_cast<std::size_t>(3 * mc.clip_frames),
             static_cast<std::size_t>(mc.feat_dim));
  for (int rep = 0; rep < 3; ++rep)
    std::copy(data.clips[0].features.data.begin(),
              data.clips[0].features.data.end(),
              seq.data.begin() + rep * data.clips[0].features.data.size());
  InferOptions opt;
  Matrix scores = infer_scores(params, seq, opt);
  CHECK(scores.rows == seq.rows);
  CHECK(scores.cols == static_cast<std::size_t>(mc.num_classes));
  for (double v : scores.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // disabling NMS never lowers any score
  opt.apply_nms = false;
  Matrix raw = infer_scores(params, seq, opt);
  for (std::size_t i = 0; i < raw.data.size(); ++i)
    CHECK(raw.data[i] >= scores.data[i]);

  Matrix tiny(4, static_cast<std::size_t>(mc.feat_dim));
  CHECK_THROWS_AS(infer_scores(params, tiny, opt), std::invalid_argument);
}

TEST_CASE("to_eval_gt flattens positive classes") {
  GroundTruthLabel g;
  g.class_vector = {0.9, 0.2, 1.0};
  g.frame_index = 7;
  auto out = to_eval_gt({g});
  REQUIRE(out.size() == 2);
  CHECK(out[0].cls == 0);
  CHECK(out[1].cls == 2);
  CHECK(out[0].frame == 7);
}
