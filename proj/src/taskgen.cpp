#include "choplab/taskgen.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

namespace choplab {

void TaskSpec::validate() const {
  if (num_classes < 2) throw TaskError("spec infeasible: need at least 2 classes");
  if (value_rounds < 1) throw TaskError("spec infeasible: value_rounds < 1");
  if (seq_len < depth + 3) throw TaskError("spec infeasible: seq_len < depth + 3");
}

LabeledInstance generate_instance(const TaskSpec& spec, Rng& rng, int forced_label) {
  spec.validate();
  const std::size_t k = spec.depth;
  const int label = forced_label >= 0
                        ? forced_label
                        : static_cast<int>(rng.below(spec.num_classes));
  if (static_cast<std::size_t>(label) >= spec.num_classes)
    throw TaskError("forced label out of range");

  // Chain layout: start marker at p, first chain slot at p+1, further
  // hop positions drawn without replacement from the rest of the body.
  const std::size_t p = 1 + rng.below(spec.seq_len - 1);  // body positions are 1-based
  std::vector<std::size_t> chain{p + 1};
  std::vector<bool> used(spec.seq_len + 1, false);
  used[p] = true;
  used[p + 1] = true;
  while (chain.size() < k + 1) {
    const std::size_t cand = 1 + rng.below(spec.seq_len);
    if (used[cand]) continue;
    used[cand] = true;
    chain.push_back(cand);
  }

  std::vector<int> tokens(spec.seq_len + 1, -1);
  tokens[0] = TaskSpec::kCls;
  tokens[p] = TaskSpec::kStart;
  for (std::size_t i = 0; i + 1 < chain.size(); ++i)
    tokens[chain[i]] = spec.ptr_token(chain[i + 1]);
  const std::size_t answer_pos = chain.back();
  tokens[answer_pos] = spec.value_token(static_cast<std::size_t>(label));

  std::vector<std::size_t> free_pos;
  for (std::size_t i = 1; i <= spec.seq_len; ++i)
    if (tokens[i] < 0) free_pos.push_back(i);
  // Deterministic shuffle of the free slots.
  for (std::size_t i = free_pos.size(); i > 1; --i)
    std::swap(free_pos[i - 1], free_pos[rng.below(i)]);

  std::size_t next = 0;
  if (spec.balanced_values) {
    // Distractor values: top every class count up to value_rounds so the
    // bag of value tokens is identical across labels.
    std::vector<std::size_t> counts(spec.num_classes, 0);
    counts[static_cast<std::size_t>(label)] = 1;
    std::size_t budget =
        std::min(free_pos.size(), spec.num_classes * spec.value_rounds - 1);
    for (std::size_t i = 0; i < budget; ++i) {
      // lowest-count class, ties broken by class index
      std::size_t best = 0;
      for (std::size_t c = 1; c < spec.num_classes; ++c)
        if (counts[c] < counts[best]) best = c;
      counts[best] += 1;
      tokens[free_pos[next++]] = spec.value_token(best);
    }
  } else {
    // Unbalanced: roughly half the free slots get uniformly random value
    // classes; the rest fall through to the pointer filler below.
    const std::size_t budget = free_pos.size() / 2;
    for (std::size_t i = 0; i < budget; ++i)
      tokens[free_pos[next++]] =
          spec.value_token(rng.below(spec.num_classes));
  }
  // Remaining slots become pointers to arbitrary body positions other
  // than the answer, so no distractor shortens the path to the value.
  while (next < free_pos.size()) {
    std::size_t target;
    do {
      target = 1 + rng.below(spec.seq_len);
    } while (target == answer_pos);
    tokens[free_pos[next++]] = spec.ptr_token(target);
  }

  LabeledInstance inst;
  inst.tokens = std::move(tokens);
  inst.label = label;
  inst.type_id = spec.type_id;
  return inst;
}

int resolve(const TaskSpec& spec, const std::vector<int>& tokens) {
  if (tokens.size() != spec.seq_len + 1) throw TaskError("resolve: bad sequence length");
  std::size_t start = 0;
  std::size_t start_count = 0;
  for (std::size_t i = 1; i < tokens.size(); ++i)
    if (tokens[i] == TaskSpec::kStart) {
      start = i;
      ++start_count;
    }
  if (start_count != 1) throw TaskError("resolve: start marker count != 1");
  std::size_t pos = start + 1;
  for (std::size_t steps = 0; steps <= spec.seq_len; ++steps) {
    if (pos >= tokens.size()) throw TaskError("resolve: chain leaves the sequence");
    const int tok = tokens[pos];
    if (spec.is_value(tok)) return static_cast<int>(spec.value_class(tok));
    if (!spec.is_ptr(tok)) throw TaskError("resolve: broken chain");
    pos = spec.ptr_target(tok);
  }
  throw TaskError("resolve: cycle detected");
}

Dataset generate_dataset(const std::vector<TaskSpec>& specs, std::size_t n_per_type,
                         std::uint64_t seed) {
  if (n_per_type < 1) throw TaskError("generate_dataset: n_per_type < 1");
  Dataset ds;
  ds.specs = specs;
  ds.seed = seed;
  for (const TaskSpec& spec : specs) {
    spec.validate();
    for (std::size_t i = 0; i < n_per_type; ++i) {
      const std::string tag =
          "taskgen/type" + std::to_string(spec.type_id) + "/idx" + std::to_string(i);
      Rng rng(derive_seed(seed, tag));
      const int label = static_cast<int>(i % spec.num_classes);
      LabeledInstance inst = generate_instance(spec, rng, label);
      const std::string split_tag =
          "split/type" + std::to_string(spec.type_id) + "/idx" + std::to_string(i);
      const std::uint64_t bucket = derive_seed(seed, split_tag) % 10;
      if (bucket < 8)
        ds.train.push_back(std::move(inst));
      else if (bucket == 8)
        ds.val.push_back(std::move(inst));
      else
        ds.test.push_back(std::move(inst));
    }
  }
  auto shuffle = [&](std::vector<LabeledInstance>& v, const char* label) {
    Rng rng(derive_seed(seed, std::string("shuffle/") + label));
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  shuffle(ds.train, "train");
  shuffle(ds.val, "val");
  shuffle(ds.test, "test");
  return ds;
}

std::vector<TaskSpec> make_suite(std::size_t num_types, std::size_t seq_len,
                                 std::size_t num_classes) {
  if (num_types != 4 && num_types != 12)
    throw TaskError("make_suite: suite must have 4 or 12 types");
  static const std::size_t kRounds[3] = {2, 1, 3};
  std::vector<TaskSpec> specs;
  for (std::size_t t = 0; t < num_types; ++t) {
    TaskSpec s;
    s.type_id = static_cast<int>(t);
    s.depth = t % 4;
    s.seq_len = seq_len;
    s.num_classes = num_classes;
    s.value_rounds = kRounds[t / 4];
    s.balanced_values = s.depth >= 1;
    s.validate();
    specs.push_back(s);
  }
  return specs;
}

void write_jsonl(const std::string& path, const std::vector<LabeledInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const LabeledInstance& inst : instances) {
    nlohmann::json j{
        {"type_id", inst.type_id}, {"tokens", inst.tokens}, {"label", inst.label}};
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<LabeledInstance> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<LabeledInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    LabeledInstance inst;
    inst.type_id = j.at("type_id").get<int>();
    inst.tokens = j.at("tokens").get<std::vector<int>>();
    inst.label = j.at("label").get<int>();
    out.push_back(std::move(inst));
  }
  return out;
}

void write_dataset_manifest(const std::string& path, const Dataset& ds) {
  nlohmann::json specs = nlohmann::json::array();
  for (const TaskSpec& s : ds.specs)
    specs.push_back({{"type_id", s.type_id},
                     {"depth", s.depth},
                     {"seq_len", s.seq_len},
                     {"num_classes", s.num_classes},
                     {"value_rounds", s.value_rounds},
                     {"balanced_values", s.balanced_values}});
  nlohmann::json j{{"seed", ds.seed},
                   {"specs", specs},
                   {"counts",
                    {{"train", ds.train.size()},
                     {"val", ds.val.size()},
                     {"test", ds.test.size()}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace choplab
