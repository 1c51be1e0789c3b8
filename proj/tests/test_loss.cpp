#include <doctest.h>

#include <cmath>

#include "spotting/loss.hpp"
#include "spotting/model.hpp"
#include "spotting/rng.hpp"

using namespace spotting;

namespace {

const double kQuarterLn2 = 0.25 * std::log(2.0);

GroundTruthLabel make_gt(std::vector<double> classes, int frame, int T) {
  GroundTruthLabel g;
  g.class_vector = std::move(classes);
  g.frame_index = frame;
  g.time_norm = label_time_norm(frame, T);
  return g;
}

}  // namespace

TEST_CASE("soft focal term hand values") {
  CHECK(soft_focal_term({1.0}, {0.5})[0] ==
        doctest::Approx(kQuarterLn2).epsilon(1e-12));
  CHECK(soft_focal_term({0.0}, {0.5})[0] ==
        doctest::Approx(kQuarterLn2).epsilon(1e-12));
  CHECK(soft_focal_term({0.3}, {0.3})[0] == 0.0);
  CHECK_THROWS_AS(soft_focal_term({1.0}, {0.0}), std::domain_error);
  CHECK_THROWS_AS(soft_focal_term({1.0}, {1.0}), std::domain_error);
  CHECK_THROWS_AS(soft_focal_term({1.0, 0.0}, {0.5}), std::invalid_argument);
}

TEST_CASE("class loss single instance and class additivity") {
  const int T = 64;
  std::vector<GroundTruthLabel> gts = {make_gt({1.0}, 10, T)};
  std::vector<Prediction> preds(1);
  preds[0].scores = {0.5};
  preds[0].time_norm = gts[0].time_norm;
  PaddedGroundTruthSet padded = pad_ground_truth(gts, 1);
  Assignment a = assign_labels(gts, preds, 10.0, T);
  CHECK(class_loss(a, padded, preds) ==
        doctest::Approx(kQuarterLn2).epsilon(1e-12));

  // appending a zero-target class with score 0.5 adds another quarter-ln2
  std::vector<GroundTruthLabel> gts2 = {make_gt({1.0, 0.0}, 10, T)};
  std::vector<Prediction> preds2(1);
  preds2[0].scores = {0.5, 0.5};
  preds2[0].time_norm = gts2[0].time_norm;
  PaddedGroundTruthSet padded2 = pad_ground_truth(gts2, 1);
  Assignment a2 = assign_labels(gts2, preds2, 10.0, T);
  CHECK(class_loss(a2, padded2, preds2) ==
        doctest::Approx(2.0 * kQuarterLn2).epsilon(1e-12));
}

TEST_CASE("loss rejects clips without events") {
  std::vector<Prediction> preds(2);
  for (auto& p : preds) {
    p.scores = {0.5};
    p.time_norm = 0.5;
  }
  PaddedGroundTruthSet padded = pad_ground_truth({}, 2);
  Assignment a = assign_labels({}, preds, 10.0, 64);
  CHECK_THROWS_AS(class_loss(a, padded, preds), std::invalid_argument);
  CHECK_THROWS_AS(time_loss(a, padded, preds), std::invalid_argument);
}

TEST_CASE("time loss is the mean L1 over matched pairs") {
  const int T = 100;
  std::vector<GroundTruthLabel> gts = {make_gt({1, 0}, 20, T),
                                       make_gt({0, 1}, 70, T)};
  std::vector<Prediction> preds(3);
  preds[0].scores = {0.9, 0.1};
  preds[0].time_norm = gts[0].time_norm + 0.02;
  preds[1].scores = {0.1, 0.9};
  preds[1].time_norm = gts[1].time_norm - 0.04;
  preds[2].scores = {0.1, 0.1};
  preds[2].time_norm = 0.99;
  PaddedGroundTruthSet padded = pad_ground_truth(gts, 3);
  Assignment a = assign_labels(gts, preds, 10.0, T);
  CHECK(time_loss(a, padded, preds) == doctest::Approx(0.03).epsilon(1e-12));

  std::vector<Prediction> exact = preds;
  exact[0].time_norm = gts[0].time_norm;
  exact[1].time_norm = gts[1].time_norm;
  Assignment ae = assign_labels(gts, exact, 10.0, T);
  CHECK(time_loss(ae, padded, exact) == 0.0);
}

TEST_CASE("total loss arithmetic and per-layer summation") {
  const int T = 64;
  std::vector<GroundTruthLabel> gts = {make_gt({1.0}, 32, T)};
  std::vector<Prediction> preds(2);
  preds[0].scores = {0.8};
  preds[0].time_norm = gts[0].time_norm + 0.01;
  preds[1].scores = {0.2};
  preds[1].time_norm = 0.9;

  LossBreakdown one = total_loss({preds}, gts, 10.0, T);
  CHECK(one.total == doctest::Approx(one.class_loss + 10.0 * one.time_loss)
                         .epsilon(1e-12));
  LossBreakdown two = total_loss({preds, preds}, gts, 10.0, T);
  CHECK(two.total == doctest::Approx(2.0 * one.total).epsilon(1e-12));
  CHECK(two.layers.size() == 2);

  // lambda scales only the time component
  LossBreakdown other = total_loss({preds}, gts, 5.0, T);
  CHECK(other.class_loss == doctest::Approx(one.class_loss).epsilon(1e-12));
  CHECK(other.total ==
        doctest::Approx(one.class_loss + 5.0 * one.time_loss).epsilon(1e-12));
}

TEST_CASE("eq-8 style arithmetic: 0.2 + 10 * 0.03 = 0.5") {
  const double total = 0.2 + 10.0 * 0.03;
  CHECK(total == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("loss is nonnegative and positive for finite logits") {
  Rng rng(101);
  const int T = 64;
  for (int rep = 0; rep < 500; ++rep) {
    const int ng = rng.uniform_int(1, 3);
    const int nq = rng.uniform_int(ng, 6);
    const int nc = rng.uniform_int(1, 4);
    std::vector<GroundTruthLabel> gts;
    for (int i = 0; i < ng; ++i) {
      std::vector<double> c(static_cast<std::size_t>(nc), 0.0);
      c[static_cast<std::size_t>(rng.uniform_int(0, nc - 1))] =
          rng.uniform(0.1, 1.0);
      gts.push_back(make_gt(c, rng.uniform_int(1, T), T));
    }
    std::vector<Prediction> preds(static_cast<std::size_t>(nq));
    for (auto& p : preds) {
      p.scores.resize(static_cast<std::size_t>(nc));
      for (double& s : p.scores) s = rng.uniform(0.01, 0.99);
      p.time_norm = rng.uniform(0.01, 0.99);
    }
    LossBreakdown b = total_loss({preds}, gts, rng.uniform(0.0, 10.0), T);
    CHECK(b.class_loss >= 0.0);
    CHECK(b.time_loss >= 0.0);
    CHECK(b.total > 0.0);  // sigmoid outputs cannot be exactly 0/1
  }
}

TEST_CASE("graph loss agrees with the plain evaluation") {
  Rng rng(55);
  const int T = 64;
  std::vector<GroundTruthLabel> gts = {make_gt({1.0, 0.0}, 12, T),
                                       make_gt({0.0, 1.0}, 40, T)};
  Tape t;
  std::vector<double> score_logits(4 * 2), time_vals(4);
  for (auto& v : score_logits) v = rng.uniform(-2.0, 2.0);
  Tensor scores = t.sigmoid(t.leaf({4, 2}, score_logits));
  for (auto& v : time_vals) v = rng.uniform(-2.0, 2.0);
  Tensor times = t.sigmoid(t.leaf({4, 1}, time_vals));

  LossBreakdown graph_breakdown;
  Tensor loss = total_loss_graph(t, {scores}, {times}, gts, 10.0, T, nullptr,
                                 nullptr, &graph_breakdown);
  LossBreakdown plain =
      total_loss({to_predictions(scores, times)}, gts, 10.0, T);
  CHECK(loss.scalar() == doctest::Approx(plain.total).epsilon(1e-12));
  CHECK(graph_breakdown.class_loss ==
        doctest::Approx(plain.class_loss).epsilon(1e-12));
  CHECK(graph_breakdown.time_loss ==
        doctest::Approx(plain.time_loss).epsilon(1e-12));
}

TEST_CASE("loss gradients w.r.t. logits match finite differences") {
  const int T = 64;
  std::vector<GroundTruthLabel> gts = {make_gt({1.0, 0.0}, 12, T),
                                       make_gt({0.0, 1.0}, 40, T)};
  Rng rng(77);
  // rows = queries; columns 0..1 are score logits, column 2 the time logit
  std::vector<double> point(4 * 3);
  for (auto& v : point) v = rng.uniform(-1.0, 1.0);

  auto build = [&](Tape& t, const Tensor& in,
                   const std::vector<Assignment>* fixed,
                   std::vector<Assignment>* out) {
    Tensor cols = t.transpose(in);  // 3x4
    Tensor scores = t.sigmoid(t.transpose(t.select_rows(cols, {0, 1})));
    Tensor times = t.sigmoid(t.transpose(t.select_rows(cols, {2})));
    return total_loss_graph(t, {scores}, {times}, gts, 10.0, T, fixed, out);
  };

  // assignment held fixed across the perturbation
  std::vector<Assignment> fixed;
  {
    Tape t;
    build(t, t.leaf({4, 3}, point), nullptr, &fixed);
  }
  const double err = grad_check(
      [&](Tape& t, const Tensor& in) { return build(t, in, &fixed, nullptr); },
      {4, 3}, point, 1e-5);
  CHECK(err < 1e-4);
}
