#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <vector>

#include "choplab/rng.hpp"
#include "choplab/taskgen.hpp"

using namespace choplab;

namespace {

TaskSpec spec_of(std::size_t depth, std::size_t seq_len = 16,
                 std::size_t classes = 4, std::size_t rounds = 2) {
  TaskSpec s;
  s.type_id = static_cast<int>(depth);
  s.depth = depth;
  s.seq_len = seq_len;
  s.num_classes = classes;
  s.value_rounds = rounds;
  return s;
}

}  // namespace

TEST_CASE("token scheme round-trips") {
  TaskSpec s = spec_of(1, 16, 4);
  CHECK(TaskSpec::kCls == 0);
  CHECK(TaskSpec::kStart == 1);
  CHECK(s.ptr_token(1) == 2);
  CHECK(s.ptr_token(16) == 17);
  CHECK(s.value_token(0) == 18);
  CHECK(s.value_token(3) == 21);
  CHECK(s.vocab_required() == 22);
  CHECK(s.is_ptr(2));
  CHECK(s.is_ptr(17));
  CHECK(!s.is_ptr(18));
  CHECK(s.is_value(18));
  CHECK(s.is_value(21));
  CHECK(!s.is_value(22));
  CHECK(s.ptr_target(5) == 4);
  CHECK(s.value_class(19) == 1);
}

TEST_CASE("depth-0 hand case: value sits right after the start marker") {
  TaskSpec s = spec_of(0);
  Rng rng(derive_seed(5, "test/depth0"));
  for (int it = 0; it < 50; ++it) {
    LabeledInstance inst = generate_instance(s, rng);
    REQUIRE(inst.tokens.size() == s.seq_len + 1);
    CHECK(inst.tokens[0] == TaskSpec::kCls);
    std::size_t start = 0;
    for (std::size_t i = 1; i < inst.tokens.size(); ++i)
      if (inst.tokens[i] == TaskSpec::kStart) start = i;
    REQUIRE(start > 0);
    int after = inst.tokens[start + 1];
    REQUIRE(s.is_value(after));
    CHECK(static_cast<int>(s.value_class(after)) == inst.label);
  }
}

TEST_CASE("depth-2 hand case: two pointer hops land on the value") {
  TaskSpec s = spec_of(2);
  Rng rng(derive_seed(5, "test/depth2"));
  for (int it = 0; it < 50; ++it) {
    LabeledInstance inst = generate_instance(s, rng);
    std::size_t start = 0;
    for (std::size_t i = 1; i < inst.tokens.size(); ++i)
      if (inst.tokens[i] == TaskSpec::kStart) start = i;
    // Hop 1: token after start is a pointer.
    int t1 = inst.tokens[start + 1];
    REQUIRE(s.is_ptr(t1));
    int t2 = inst.tokens[s.ptr_target(t1)];
    REQUIRE(s.is_ptr(t2));
    int t3 = inst.tokens[s.ptr_target(t2)];
    REQUIRE(s.is_value(t3));
    CHECK(static_cast<int>(s.value_class(t3)) == inst.label);
  }
}

TEST_CASE("resolver agrees with the generator label across depths") {
  for (std::size_t depth : {0u, 1u, 2u, 3u}) {
    TaskSpec s = spec_of(depth, 24, 6, 2);
    Rng rng(derive_seed(9, "test/resolve"));
    for (int it = 0; it < 200; ++it) {
      LabeledInstance inst = generate_instance(s, rng);
      CHECK(resolve(s, inst.tokens) == inst.label);
    }
  }
}

TEST_CASE("resolver rejects corrupted sequences") {
  TaskSpec s = spec_of(1);
  Rng rng(1);
  LabeledInstance inst = generate_instance(s, rng);
  // No start marker.
  std::vector<int> no_start = inst.tokens;
  std::replace(no_start.begin(), no_start.end(), TaskSpec::kStart, s.value_token(0));
  CHECK_THROWS_AS(resolve(s, no_start), TaskError);
  // A self-pointing token right after start loops forever.
  std::size_t start = 0;
  for (std::size_t i = 1; i < inst.tokens.size(); ++i)
    if (inst.tokens[i] == TaskSpec::kStart) start = i;
  std::vector<int> cyc = inst.tokens;
  cyc[start + 1] = s.ptr_token(start + 1);
  CHECK_THROWS_AS(resolve(s, cyc), TaskError);
}

TEST_CASE("value-token counts are identical across classes within an instance") {
  for (std::size_t rounds : {1u, 2u, 3u}) {
    TaskSpec s = spec_of(2, 24, 4, rounds);
    Rng rng(derive_seed(3, "test/balance"));
    for (int it = 0; it < 100; ++it) {
      LabeledInstance inst = generate_instance(s, rng);
      std::map<int, int> counts;
      for (int t : inst.tokens)
        if (s.is_value(t)) ++counts[static_cast<int>(s.value_class(t))];
      REQUIRE(counts.size() == s.num_classes);
      for (const auto& [cls, n] : counts)
        CHECK(n == static_cast<int>(rounds));
    }
  }
}

TEST_CASE("a bag-of-tokens cannot separate labels") {
  // Identical multisets of value tokens across classes mean the best
  // any order-blind classifier can do is chance. Verify directly that
  // instances with different labels can share a token multiset only in
  // the value region (pointers necessarily differ), and that value
  // histograms match exactly.
  TaskSpec s = spec_of(1, 16, 4, 2);
  Rng rng(derive_seed(7, "test/bag"));
  std::map<int, std::map<int, int>> value_hist_by_label;
  for (int it = 0; it < 400; ++it) {
    LabeledInstance inst = generate_instance(s, rng);
    for (int t : inst.tokens)
      if (s.is_value(t)) ++value_hist_by_label[inst.label][t];
  }
  // Every label observed the same per-class totals up to sampling of
  // the label itself; normalize by the number of instances per label.
  // Since each instance has exactly `rounds` of each value class, each
  // label's histogram is flat.
  for (const auto& [label, hist] : value_hist_by_label) {
    REQUIRE(hist.size() == s.num_classes);
    int first = hist.begin()->second;
    for (const auto& [tok, n] : hist) CHECK(n == first);
  }
}

TEST_CASE("forced labels are honored") {
  TaskSpec s = spec_of(1);
  Rng rng(2);
  for (int label = 0; label < 4; ++label) {
    LabeledInstance inst = generate_instance(s, rng, label);
    CHECK(inst.label == label);
    CHECK(resolve(s, inst.tokens) == label);
  }
}

TEST_CASE("generation is deterministic in the rng state") {
  TaskSpec s = spec_of(3);
  Rng a(derive_seed(11, "x")), b(derive_seed(11, "x"));
  for (int it = 0; it < 20; ++it) {
    LabeledInstance ia = generate_instance(s, a);
    LabeledInstance ib = generate_instance(s, b);
    CHECK(ia.tokens == ib.tokens);
    CHECK(ia.label == ib.label);
  }
}

TEST_CASE("dataset split sizes, balance, and determinism") {
  auto specs = make_suite(4, 16, 4);
  REQUIRE(specs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(specs[i].depth == i);

  Dataset a = generate_dataset(specs, 500, 77);
  Dataset b = generate_dataset(specs, 500, 77);
  Dataset c = generate_dataset(specs, 500, 78);

  std::size_t total = a.train.size() + a.val.size() + a.test.size();
  CHECK(total == 4 * 500);
  // Hash-based split: roughly 80/10/10.
  CHECK(a.train.size() > total * 7 / 10);
  CHECK(a.val.size() > total / 20);
  CHECK(a.test.size() > total / 20);

  // Bitwise determinism across reruns; different seed differs.
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].tokens == b.train[i].tokens);
    CHECK(a.train[i].label == b.train[i].label);
  }
  bool any_diff = a.train.size() != c.train.size();
  for (std::size_t i = 0; !any_diff && i < a.train.size(); ++i)
    any_diff = a.train[i].tokens != c.train[i].tokens;
  CHECK(any_diff);

  // Labels balanced within each type (round-robin before splitting).
  std::map<std::pair<int, int>, int> label_counts;  // (type, label)
  for (const auto& split : {a.train, a.val, a.test})
    for (const auto& inst : split) ++label_counts[{inst.type_id, inst.label}];
  for (int type = 0; type < 4; ++type) {
    int lo = 1 << 30, hi = 0;
    for (int label = 0; label < 4; ++label) {
      int n = label_counts[{type, label}];
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("12-type suite crosses depths with value densities") {
  auto specs = make_suite(12, 32, 8);
  REQUIRE(specs.size() == 12);
  std::set<std::pair<std::size_t, std::size_t>> combos;
  for (const auto& s : specs) {
    CHECK(s.depth <= 3);
    combos.insert({s.depth, s.value_rounds});
    CHECK_NOTHROW(s.validate());
  }
  CHECK(combos.size() == 12);
}

TEST_CASE("spec validation rejects infeasible shapes") {
  TaskSpec s = spec_of(3, 4, 8, 3);  // body too short for chain + values
  CHECK_THROWS_AS(s.validate(), TaskError);
}

TEST_CASE("jsonl round-trips instances exactly") {
  TaskSpec s = spec_of(2);
  Rng rng(5);
  std::vector<LabeledInstance> out;
  for (int i = 0; i < 10; ++i) out.push_back(generate_instance(s, rng));
  std::string path = "taskgen_roundtrip_test.jsonl";
  write_jsonl(path, out);
  auto in = read_jsonl(path);
  REQUIRE(in.size() == out.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(in[i].tokens == out[i].tokens);
    CHECK(in[i].label == out[i].label);
    CHECK(in[i].type_id == out[i].type_id);
  }
  std::remove(path.c_str());
}
