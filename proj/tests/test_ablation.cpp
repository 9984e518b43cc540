#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <vector>

#include "choplab/ablation.hpp"
#include "choplab/report.hpp"
#include "choplab/rng.hpp"

using namespace choplab;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = 16;
  cfg.max_seq_len = 11;
  cfg.num_classes = 4;
  return cfg;
}

std::vector<LabeledInstance> tiny_eval_set(std::size_t n_per_type = 40) {
  TaskSpec a;
  a.type_id = 0;
  a.depth = 0;
  a.seq_len = 10;
  a.num_classes = 4;
  a.value_rounds = 1;
  TaskSpec b = a;
  b.type_id = 1;
  b.depth = 1;
  Dataset ds = generate_dataset({a, b}, n_per_type, 5);
  std::vector<LabeledInstance> all = ds.train;
  all.insert(all.end(), ds.val.begin(), ds.val.end());
  all.insert(all.end(), ds.test.begin(), ds.test.end());
  return all;
}

}  // namespace

TEST_CASE("relative accuracy change follows the published convention") {
  // 0.9557 -> 0.9083 is a 4.96% relative drop.
  CHECK(*relative_diff(0.9083, 0.9557) == doctest::Approx(-0.0496).epsilon(1e-2));
  // 0.65 -> 0.55 is a 15.38% relative drop.
  CHECK(*relative_diff(0.55, 0.65) == doctest::Approx(-0.1538).epsilon(1e-3));
  CHECK(*relative_diff(0.5, 0.5) == 0.0);
  CHECK(*relative_diff(0.6, 0.5) == doctest::Approx(0.2));
  // Undefined at a zero baseline — sentinel, not infinity.
  CHECK(!relative_diff(0.3, 0.0).has_value());
  CHECK(!relative_diff(0.0, 0.0).has_value());
  CHECK_THROWS(relative_diff(-0.1, 0.5));
}

TEST_CASE("mean-per-type accuracies: arithmetic and harmonic") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 3);
  auto instances = tiny_eval_set();
  EvalReport r = eval_by_type(params, ChopPlan::identity(cfg), instances);
  REQUIRE(r.per_type_acc.size() == 2);
  double a0 = r.per_type_acc[0], a1 = r.per_type_acc[1];
  CHECK(r.ampt == doctest::Approx((a0 + a1) / 2).epsilon(1e-12));
  if (a0 > 0 && a1 > 0) {
    CHECK(r.hmpt == doctest::Approx(2.0 / (1.0 / a0 + 1.0 / a1)).epsilon(1e-12));
    CHECK(r.hmpt <= r.ampt + 1e-12);  // harmonic never exceeds arithmetic
  } else {
    CHECK(r.hmpt == 0.0);
    CHECK(r.hmpt_zero_type);
  }
  // Overall accuracy is the instance-weighted mean.
  double weighted = (a0 * r.per_type_count[0] + a1 * r.per_type_count[1]) /
                    (r.per_type_count[0] + r.per_type_count[1]);
  CHECK(r.overall == doctest::Approx(weighted).epsilon(1e-12));
}

TEST_CASE("head sweep shapes, labels, and agreement with direct evaluation") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 7);
  auto instances = tiny_eval_set(30);

  HeadSweepResult r = remove_one_head_sweep(params, instances);
  REQUIRE(r.full.col_labels.size() == cfg.layers * cfg.heads);
  CHECK(r.full.col_labels[0] == "L1H1");
  CHECK(r.full.col_labels.back() == "L2H2");
  REQUIRE(r.full.row_labels.size() == 2);
  REQUIRE(r.per_layer_extreme.col_labels.size() == cfg.layers);

  // Column (l=1, h=0) must equal a hand-built single-head ablation.
  ChopPlan plan = ChopPlan::identity(cfg);
  plan.head_mask[1][0] = 0;
  EvalReport ablated = eval_by_type(params, plan, instances);
  std::size_t col = 1 * cfg.heads + 0;
  for (std::size_t t = 0; t < 2; ++t) {
    auto expect = relative_diff(ablated.per_type_acc[static_cast<int>(t)],
                                r.baseline.per_type_acc[static_cast<int>(t)]);
    REQUIRE(r.full.values[t][col].has_value() == expect.has_value());
    if (expect)
      CHECK(*r.full.values[t][col] == doctest::Approx(*expect).epsilon(1e-12));
  }

  // Per-layer extreme is the largest-|value| entry of that layer's heads.
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      double best = 0.0;
      bool any = false;
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        auto v = r.full.values[t][l * cfg.heads + h];
        if (v && (!any || std::abs(*v) > std::abs(best))) {
          best = *v;
          any = true;
        }
      }
      REQUIRE(r.per_layer_extreme.values[t][l].has_value() == any);
      if (any) CHECK(*r.per_layer_extreme.values[t][l] == doctest::Approx(best));
    }
}

TEST_CASE("keep-one-head masks every other head in the layer") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 7);
  auto instances = tiny_eval_set(30);

  HeadSweepResult r = keep_one_head_sweep(params, instances);
  ChopPlan plan = ChopPlan::identity(cfg);
  plan.head_mask[0] = {1, 0};  // keep head 0 of layer 0
  EvalReport kept = eval_by_type(params, plan, instances);
  for (std::size_t t = 0; t < 2; ++t) {
    auto expect = relative_diff(kept.per_type_acc[static_cast<int>(t)],
                                r.baseline.per_type_acc[static_cast<int>(t)]);
    if (expect) CHECK(*r.full.values[t][0] == doctest::Approx(*expect).epsilon(1e-12));
  }
}

TEST_CASE("with two layers, remove-one and keep-one visit the same plans") {
  EncoderConfig cfg = tiny_config();  // exactly 2 layers
  EncoderParams params = EncoderParams::init(cfg, 9);
  auto instances = tiny_eval_set(30);
  LayerSweepResult rm = remove_one_layer_sweep(params, instances);
  LayerSweepResult kp = keep_one_layer_sweep(params, instances);
  // Removing layer 1 == keeping layer 2 and vice versa.
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(rm.matrix.values[t][0] == kp.matrix.values[t][1]);
    CHECK(rm.matrix.values[t][1] == kp.matrix.values[t][0]);
  }
  CHECK(rm.matrix.col_labels == std::vector<std::string>{"L1", "L2"});
}

TEST_CASE("sweeps are deterministic and worker-count independent") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 11);
  auto instances = tiny_eval_set(25);
  HeadSweepResult a = remove_one_head_sweep(params, instances, 1);
  HeadSweepResult b = remove_one_head_sweep(params, instances, 4);
  for (std::size_t t = 0; t < a.full.row_labels.size(); ++t)
    for (std::size_t c = 0; c < a.full.col_labels.size(); ++c)
      CHECK(a.full.values[t][c] == b.full.values[t][c]);
}

TEST_CASE("spearman handles perfect, inverse, and tied rankings") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // Monotone but nonlinear is still rho = 1.
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 256}) == doctest::Approx(1.0));
  // Ties get average ranks: {1,1,2} vs {2,2,3} is still perfect.
  CHECK(spearman({1, 1, 2}, {2, 2, 3}) == doctest::Approx(1.0));
  // Zero variance on one side returns 0 rather than NaN.
  CHECK(spearman({1, 1, 1}, {1, 2, 3}) == 0.0);
}

TEST_CASE("echelon centroids on a hand matrix") {
  // Types 0 and 1; layer importances [[1, 0], [0, 1]] from rel diffs
  // [[-1, 0], [0, -1]]: centroids 1 and 2 (1-based), rho = +1 against
  // depths {0, 1}.
  AblationMatrix m;
  m.row_labels = {"type0", "type1"};
  m.col_labels = {"L1", "L2"};
  m.values = {{-1.0, 0.0}, {0.0, -1.0}};
  EchelonStat s = echelon_statistic(m, {0.0, 1.0});
  REQUIRE(s.centroids.size() == 2);
  CHECK(*s.centroids[0] == doctest::Approx(1.0));
  CHECK(*s.centroids[1] == doctest::Approx(2.0));
  CHECK(s.spearman_rho == doctest::Approx(1.0));

  // Positive diffs carry no importance; a row of them has no centroid.
  AblationMatrix pos = m;
  pos.values = {{0.5, 0.2}, {0.0, -1.0}};
  CHECK_THROWS_AS(echelon_statistic(pos, {0.0, 1.0}), std::invalid_argument);

  // Mixed row: importance weights only the negative entries.
  AblationMatrix mixed = m;
  mixed.values = {{-0.2, -0.6}, {0.1, -1.0}};
  EchelonStat sm = echelon_statistic(mixed, {0.0, 1.0});
  CHECK(*sm.centroids[0] == doctest::Approx((0.2 * 1 + 0.6 * 2) / 0.8));
  CHECK(*sm.centroids[1] == doctest::Approx(2.0));

  // Undefined cells are skipped.
  AblationMatrix holey = m;
  holey.values = {{-1.0, std::nullopt}, {std::nullopt, -1.0}};
  EchelonStat sh = echelon_statistic(holey, {0.0, 1.0});
  CHECK(*sh.centroids[0] == doctest::Approx(1.0));
  CHECK(*sh.centroids[1] == doctest::Approx(2.0));
}

TEST_CASE("threshold sweep: kept fractions, histograms, determinism") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 13);
  GateParams gate = GateParams::init(cfg, false, 1e-3, 13);
  auto instances = tiny_eval_set(20);
  std::vector<double> grid{0.0, 0.3, 0.5, 0.7, 1.01};

  auto rows = threshold_sweep(params, gate, instances, grid, 99);
  REQUIRE(rows.size() == grid.size());
  CHECK(rows[0].kept_fraction == 1.0);  // theta 0 never chops
  CHECK(rows[0].all_chopped == 0);
  CHECK(rows.back().kept_fraction == 0.0);  // theta > 1 chops all
  CHECK(rows.back().all_chopped == instances.size());
  double prev = 1.0 + 1e-12;
  for (const auto& r : rows) {
    CHECK(r.kept_fraction <= prev);
    prev = r.kept_fraction;
    std::size_t hist_total = 0;
    for (const auto& [mask, n] : r.plan_histogram) hist_total += n;
    CHECK(hist_total == instances.size());
    // Random baseline chops about the same fraction.
    CHECK(std::abs(r.random_kept_fraction - r.kept_fraction) < 0.2);
  }

  auto rows2 = threshold_sweep(params, gate, instances, grid, 99);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].report.overall == rows2[i].report.overall);
    CHECK(rows[i].random_baseline.overall == rows2[i].random_baseline.overall);
    CHECK(rows[i].kept_fraction == rows2[i].kept_fraction);
  }
}

TEST_CASE("matrix csv round-trips values and undef markers byte-exactly") {
  AblationMatrix m;
  m.family = "layer-remove";
  m.row_labels = {"type0", "type1"};
  m.col_labels = {"L1", "L2", "L3"};
  m.values = {{-0.123456789012345678, 0.0, std::nullopt},
              {1e-17, -1.0 / 3.0, 0.5}};
  std::string p1 = "ablation_csv_test_1.csv", p2 = "ablation_csv_test_2.csv";
  write_matrix_csv(p1, m);
  AblationMatrix back = read_matrix_csv(p1);
  REQUIRE(back.values.size() == 2);
  CHECK(!back.values[0][2].has_value());
  CHECK(*back.values[1][1] == -1.0 / 3.0);  // %.17g round-trips doubles
  write_matrix_csv(p2, back);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("attention dump covers kept and skipped layers") {
  EncoderConfig cfg = tiny_config();
  EncoderParams params = EncoderParams::init(cfg, 17);
  auto instances = tiny_eval_set(5);
  ChopPlan plan = ChopPlan::identity(cfg);
  plan.skip_layers = {1};
  std::string path = "attention_dump_test.csv";
  dump_attention(params, plan, instances[0], path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("skipped") != std::string::npos);
  CHECK(text.find("layer") != std::string::npos);
  std::remove(path.c_str());
}
