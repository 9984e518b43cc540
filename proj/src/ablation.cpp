#include "choplab/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace choplab {

namespace {

std::vector<int> sorted_type_ids(const std::vector<LabeledInstance>& instances) {
  std::vector<int> ids;
  for (const LabeledInstance& i : instances)
    if (std::find(ids.begin(), ids.end(), i.type_id) == ids.end())
      ids.push_back(i.type_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t w = std::min(workers, n);
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) fn(i);
    });
  for (std::thread& th : pool) th.join();
}

}  // namespace

EvalReport eval_by_type(const EncoderParams& params, const ChopPlan& plan,
                        const std::vector<LabeledInstance>& instances) {
  if (instances.empty()) throw std::invalid_argument("eval_by_type: no instances");
  EvalReport r;
  std::map<int, std::size_t> correct;
  std::size_t total_correct = 0;
  for (const LabeledInstance& inst : instances) {
    const ForwardTrace trace = encoder_forward(inst.tokens, params, plan);
    const bool ok = classify(trace) == static_cast<std::size_t>(inst.label);
    r.per_type_count[inst.type_id] += 1;
    if (ok) {
      correct[inst.type_id] += 1;
      ++total_correct;
    }
  }
  double sum = 0.0, inv_sum = 0.0;
  for (const auto& [type, count] : r.per_type_count) {
    if (count == 0) throw std::invalid_argument("eval_by_type: empty type bucket");
    const double acc = static_cast<double>(correct[type]) / static_cast<double>(count);
    r.per_type_acc[type] = acc;
    sum += acc;
    if (acc == 0.0)
      r.hmpt_zero_type = true;
    else
      inv_sum += 1.0 / acc;
  }
  const double t = static_cast<double>(r.per_type_acc.size());
  r.overall = static_cast<double>(total_correct) / static_cast<double>(instances.size());
  r.ampt = sum / t;
  r.hmpt = r.hmpt_zero_type ? 0.0 : t / inv_sum;
  return r;
}

std::optional<double> relative_diff(double acc_new, double acc_org) {
  if (acc_new < 0.0 || acc_org < 0.0)
    throw std::invalid_argument("relative_diff: negative accuracy");
  if (acc_org == 0.0) return std::nullopt;
  return (acc_new - acc_org) / acc_org;
}

namespace {

// Shared skeleton of the four manual sweeps: evaluate the identity
// plan once, evaluate each candidate plan, report relative diffs per
// type against the same baseline.
struct SweepGrid {
  std::vector<ChopPlan> plans;
  std::vector<std::string> col_labels;
};

AblationMatrix run_grid(const EncoderParams& params,
                        const std::vector<LabeledInstance>& instances,
                        const SweepGrid& grid, const EvalReport& baseline,
                        const std::string& family, std::size_t workers) {
  const std::vector<int> types = sorted_type_ids(instances);
  AblationMatrix m;
  m.family = family;
  m.col_labels = grid.col_labels;
  for (int t : types) m.row_labels.push_back("type" + std::to_string(t));
  m.values.assign(types.size(),
                  std::vector<std::optional<double>>(grid.plans.size(), std::nullopt));
  std::vector<EvalReport> reports(grid.plans.size());
  parallel_for(grid.plans.size(), workers, [&](std::size_t i) {
    reports[i] = eval_by_type(params, grid.plans[i], instances);
  });
  for (std::size_t i = 0; i < grid.plans.size(); ++i)
    for (std::size_t t = 0; t < types.size(); ++t)
      m.values[t][i] = relative_diff(reports[i].per_type_acc.at(types[t]),
                                     baseline.per_type_acc.at(types[t]));
  return m;
}

// T×L extreme of a T×(L·H) head matrix. `by_abs` keeps the entry with
// the largest magnitude (Table-1 convention); otherwise the largest
// signed value (Table-2 convention).
AblationMatrix per_layer_extreme(const AblationMatrix& full, std::size_t layers,
                                 std::size_t heads, bool by_abs) {
  AblationMatrix m;
  m.family = full.family + "-extreme";
  m.row_labels = full.row_labels;
  for (std::size_t l = 0; l < layers; ++l)
    m.col_labels.push_back("L" + std::to_string(l + 1));
  m.values.assign(full.values.size(),
                  std::vector<std::optional<double>>(layers, std::nullopt));
  for (std::size_t t = 0; t < full.values.size(); ++t)
    for (std::size_t l = 0; l < layers; ++l) {
      std::optional<double> best;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::optional<double>& v = full.values[t][l * heads + h];
        if (!v) continue;
        if (!best || (by_abs ? std::abs(*v) > std::abs(*best) : *v > *best)) best = v;
      }
      m.values[t][l] = best;
    }
  return m;
}

HeadSweepResult head_sweep(const EncoderParams& params,
                           const std::vector<LabeledInstance>& instances, bool keep_one,
                           std::size_t workers) {
  const EncoderConfig& cfg = params.config;
  SweepGrid grid;
  for (std::size_t l = 0; l < cfg.layers; ++l)
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      ChopPlan plan = ChopPlan::identity(cfg);
      if (keep_one) {
        for (std::size_t i = 0; i < cfg.heads; ++i)
          plan.head_mask[l][i] = (i == h) ? 1 : 0;
      } else {
        plan.head_mask[l][h] = 0;
      }
      grid.plans.push_back(std::move(plan));
      grid.col_labels.push_back("L" + std::to_string(l + 1) + "H" + std::to_string(h + 1));
    }
  HeadSweepResult out;
  out.baseline = eval_by_type(params, ChopPlan::identity(cfg), instances);
  out.full = run_grid(params, instances, grid, out.baseline,
                      keep_one ? "head-keep" : "head-remove", workers);
  out.per_layer_extreme =
      per_layer_extreme(out.full, cfg.layers, cfg.heads, /*by_abs=*/!keep_one);
  return out;
}

LayerSweepResult layer_sweep(const EncoderParams& params,
                             const std::vector<LabeledInstance>& instances,
                             bool keep_one, std::size_t workers) {
  const EncoderConfig& cfg = params.config;
  SweepGrid grid;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    ChopPlan plan = ChopPlan::identity(cfg);
    if (keep_one) {
      for (std::size_t i = 0; i < cfg.layers; ++i)
        if (i != l) plan.skip_layers.insert(i);
    } else {
      plan.skip_layers.insert(l);
    }
    grid.plans.push_back(std::move(plan));
    grid.col_labels.push_back("L" + std::to_string(l + 1));
  }
  LayerSweepResult out;
  out.baseline = eval_by_type(params, ChopPlan::identity(cfg), instances);
  out.matrix = run_grid(params, instances, grid, out.baseline,
                        keep_one ? "layer-keep" : "layer-remove", workers);
  return out;
}

}  // namespace

HeadSweepResult remove_one_head_sweep(const EncoderParams& params,
                                      const std::vector<LabeledInstance>& instances,
                                      std::size_t workers) {
  return head_sweep(params, instances, /*keep_one=*/false, workers);
}

HeadSweepResult keep_one_head_sweep(const EncoderParams& params,
                                    const std::vector<LabeledInstance>& instances,
                                    std::size_t workers) {
  return head_sweep(params, instances, /*keep_one=*/true, workers);
}

LayerSweepResult remove_one_layer_sweep(const EncoderParams& params,
                                        const std::vector<LabeledInstance>& instances,
                                        std::size_t workers) {
  return layer_sweep(params, instances, /*keep_one=*/false, workers);
}

LayerSweepResult keep_one_layer_sweep(const EncoderParams& params,
                                      const std::vector<LabeledInstance>& instances,
                                      std::size_t workers) {
  return layer_sweep(params, instances, /*keep_one=*/true, workers);
}

std::vector<ThresholdRow> threshold_sweep(const EncoderParams& params,
                                          const GateParams& gate,
                                          const std::vector<LabeledInstance>& instances,
                                          const std::vector<double>& thresholds,
                                          std::uint64_t seed) {
  if (instances.empty()) throw std::invalid_argument("threshold_sweep: no instances");
  const EncoderConfig& cfg = params.config;
  const double layer_cost =
      1.0 / static_cast<double>(cfg.layers);  // uniform per-layer stack share
  std::vector<ThresholdRow> rows;
  for (double theta : thresholds) {
    ThresholdRow row;
    row.theta = theta;
    std::map<int, std::size_t> correct, counts;
    double kept_sum = 0.0;
    double chopped_sum = 0.0;
    for (const LabeledInstance& inst : instances) {
      const GatedResult res = gated_forward(inst.tokens, params, gate, theta);
      const bool ok =
          argmax_lowest(res.logits) == static_cast<std::size_t>(inst.label);
      counts[inst.type_id] += 1;
      if (ok) correct[inst.type_id] += 1;
      const std::size_t chopped = res.plan.skip_layers.size();
      chopped_sum += static_cast<double>(chopped);
      kept_sum += 1.0 - layer_cost * static_cast<double>(chopped);
      if (res.all_layers_chopped) row.all_chopped += 1;
      std::uint64_t mask = 0;
      for (std::size_t l : res.plan.skip_layers) mask |= (1ULL << l);
      row.plan_histogram[mask] += 1;
    }
    row.kept_fraction = kept_sum / static_cast<double>(instances.size());

    // Random-chop baseline at the matched mean chop count.
    const double mean_chop = chopped_sum / static_cast<double>(instances.size());
    std::map<int, std::size_t> rcorrect;
    double rkept = 0.0;
    std::size_t idx = 0;
    for (const LabeledInstance& inst : instances) {
      Rng rng(derive_seed(seed, "randomchop/theta" + std::to_string(theta) + "/idx" +
                                    std::to_string(idx++)));
      std::size_t n_chop = static_cast<std::size_t>(mean_chop);
      if (rng.uniform() < mean_chop - std::floor(mean_chop)) ++n_chop;
      n_chop = std::min(n_chop, cfg.layers);
      ChopPlan plan = ChopPlan::identity(cfg);
      while (plan.skip_layers.size() < n_chop)
        plan.skip_layers.insert(rng.below(cfg.layers));
      rkept += 1.0 - layer_cost * static_cast<double>(plan.skip_layers.size());
      const ForwardTrace trace = encoder_forward(inst.tokens, params, plan);
      if (classify(trace) == static_cast<std::size_t>(inst.label))
        rcorrect[inst.type_id] += 1;
    }
    row.random_kept_fraction = rkept / static_cast<double>(instances.size());

    auto finish = [&](const std::map<int, std::size_t>& corr, EvalReport& rep) {
      double sum = 0.0, inv = 0.0;
      std::size_t total = 0;
      for (const auto& [type, count] : counts) {
        const double acc =
            corr.count(type) ? static_cast<double>(corr.at(type)) / count : 0.0;
        rep.per_type_acc[type] = acc;
        rep.per_type_count[type] = count;
        total += corr.count(type) ? corr.at(type) : 0;
        sum += acc;
        if (acc == 0.0)
          rep.hmpt_zero_type = true;
        else
          inv += 1.0 / acc;
      }
      const double t = static_cast<double>(counts.size());
      rep.overall = static_cast<double>(total) / static_cast<double>(instances.size());
      rep.ampt = sum / t;
      rep.hmpt = rep.hmpt_zero_type ? 0.0 : t / inv;
    };
    finish(correct, row.report);
    finish(rcorrect, row.random_baseline);
    rows.push_back(std::move(row));
  }
  return rows;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equally sized vectors");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

EchelonStat echelon_statistic(const AblationMatrix& matrix,
                              const std::vector<double>& type_depths) {
  if (matrix.values.size() != type_depths.size())
    throw std::invalid_argument("echelon_statistic: depth count != row count");
  EchelonStat out;
  std::vector<double> defined_centroids, defined_depths;
  for (std::size_t t = 0; t < matrix.values.size(); ++t) {
    double wsum = 0.0, lsum = 0.0;
    for (std::size_t l = 0; l < matrix.values[t].size(); ++l) {
      const std::optional<double>& v = matrix.values[t][l];
      if (!v) continue;
      const double w = std::max(0.0, -*v);
      wsum += w;
      lsum += w * static_cast<double>(l + 1);
    }
    if (wsum > 0.0) {
      out.centroids.push_back(lsum / wsum);
      defined_centroids.push_back(lsum / wsum);
      defined_depths.push_back(type_depths[t]);
    } else {
      out.centroids.push_back(std::nullopt);
    }
  }
  if (defined_centroids.size() < 2)
    throw std::invalid_argument(
        "echelon_statistic: fewer than 2 types with defined centroids");
  out.spearman_rho = spearman(defined_depths, defined_centroids);
  return out;
}

void dump_attention(const EncoderParams& params, const ChopPlan& plan,
                    const LabeledInstance& instance, const std::string& path) {
  const ForwardTrace trace = encoder_forward(instance.tokens, params, plan);
  const EncoderConfig& cfg = params.config;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_attention: cannot open " + path);
  char buf[32];
  out << "# head-averaged attention, one block per layer\n";
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    if (plan.is_skipped(l)) {
      out << "layer," << (l + 1) << ",skipped\n";
      continue;
    }
    out << "layer," << (l + 1) << ",kept\n";
    const std::size_t seq = instance.tokens.size();
    for (std::size_t r = 0; r < seq; ++r) {
      for (std::size_t c = 0; c < seq; ++c) {
        double avg = 0.0;
        for (std::size_t h = 0; h < cfg.heads; ++h)
          avg += trace.attention[l][h].at(r, c);
        avg /= static_cast<double>(cfg.heads);
        std::snprintf(buf, sizeof(buf), "%.17g", avg);
        out << (c ? "," : "") << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("dump_attention: write failed " + path);
}

}  // namespace choplab
