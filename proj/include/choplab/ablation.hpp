#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "choplab/encoder.hpp"
#include "choplab/gate.hpp"
#include "choplab/taskgen.hpp"

namespace choplab {

struct EvalReport {
  std::map<int, double> per_type_acc;
  std::map<int, std::size_t> per_type_count;
  double overall = 0.0;
  double ampt = 0.0;  // arithmetic mean per type
  double hmpt = 0.0;  // harmonic mean per type; 0 when any type is at 0
  bool hmpt_zero_type = false;
};

EvalReport eval_by_type(const EncoderParams& params, const ChopPlan& plan,
                        const std::vector<LabeledInstance>& instances);

// (acc_new - acc_org) / acc_org. acc_org = 0 yields nullopt, never Inf.
// Throws on negative inputs.
std::optional<double> relative_diff(double acc_new, double acc_org);

struct AblationMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::optional<double>>> values;
  std::string family;  // e.g. "layer-remove"
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct HeadSweepResult {
  AblationMatrix full;               // T × (L·H), columns L1H1, L1H2, ...
  AblationMatrix per_layer_extreme;  // T × L
  EvalReport baseline;
};

struct LayerSweepResult {
  AblationMatrix matrix;  // T × L
  EvalReport baseline;
};

// One plan per (l,h) with that head's alpha zeroed; entries are
// relative diffs against the shared identity-plan baseline. The
// per-layer extreme keeps the entry with the largest |value| among the
// heads of a layer.
HeadSweepResult remove_one_head_sweep(const EncoderParams& params,
                                      const std::vector<LabeledInstance>& instances,
                                      std::size_t workers = 1);
// One plan per (l,h) with every other head of layer l masked; the
// per-layer extreme keeps the largest (signed) value.
HeadSweepResult keep_one_head_sweep(const EncoderParams& params,
                                    const std::vector<LabeledInstance>& instances,
                                    std::size_t workers = 1);
LayerSweepResult remove_one_layer_sweep(const EncoderParams& params,
                                        const std::vector<LabeledInstance>& instances,
                                        std::size_t workers = 1);
LayerSweepResult keep_one_layer_sweep(const EncoderParams& params,
                                      const std::vector<LabeledInstance>& instances,
                                      std::size_t workers = 1);

struct ThresholdRow {
  double theta = 0.0;
  EvalReport report;
  double kept_fraction = 1.0;  // encoder-stack fraction, mean over instances
  std::map<std::uint64_t, std::size_t> plan_histogram;  // skip-set bitmask -> count
  std::size_t all_chopped = 0;
  EvalReport random_baseline;  // random chop at matched fraction
  double random_kept_fraction = 1.0;
};

std::vector<ThresholdRow> threshold_sweep(const EncoderParams& params,
                                          const GateParams& gate,
                                          const std::vector<LabeledInstance>& instances,
                                          const std::vector<double>& thresholds,
                                          std::uint64_t seed);

struct EchelonStat {
  std::vector<std::optional<double>> centroids;  // one per type row
  double spearman_rho = 0.0;
};

// Importance of layer l for a type is max(0, -relative_diff); the
// centroid is the importance-weighted mean layer index (1-based).
// spearman_rho correlates type depth with centroid. Throws when fewer
// than 2 rows have a defined centroid.
EchelonStat echelon_statistic(const AblationMatrix& matrix,
                              const std::vector<double>& type_depths);

// Per-layer head-averaged attention for one instance as CSV; skipped
// layers appear as a flagged empty block.
void dump_attention(const EncoderParams& params, const ChopPlan& plan,
                    const LabeledInstance& instance, const std::string& path);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace choplab
