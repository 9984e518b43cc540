#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "choplab/tensor.hpp"

namespace choplab {

using NodeId = std::size_t;

// Reverse-mode tape. Forward calls append nodes in execution order;
// backward() replays the recorded adjoints in exact reverse order,
// accumulating gradients additively across fan-out. One tape is
// single-threaded; independent tapes share nothing.
class Tape {
 public:
  NodeId leaf(const Tensor& v);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId add_bias_row(NodeId x, NodeId bias);
  // Embedding lookup: rows of `table` selected by token ids.
  NodeId gather_rows(NodeId table, const std::vector<int>& ids);
  NodeId pick_rows(NodeId x, const std::vector<std::size_t>& rows);
  NodeId softmax_rows(NodeId x);
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps);
  NodeId gelu(NodeId x);
  NodeId sigmoid(NodeId x);
  // (B×H) -> (B×1), mean over the row.
  NodeId row_mean(NodeId x);
  // a, b: (B·S)×d; s: (B×1). Per example e, out rows = a + s[e]·(b−a).
  NodeId lerp_rows_by_example(NodeId a, NodeId b, NodeId s, std::size_t seq);
  // Multi-head self-attention over a stacked batch. q/k/v: (B·S)×d with
  // d = heads·d_head; per-head output slice is multiplied by alpha[h]
  // before concatenation. Scores use 1/sqrt(d_head) scaling.
  NodeId batched_attention(NodeId q, NodeId k, NodeId v, std::size_t batch,
                           std::size_t seq, std::size_t heads,
                           const std::vector<double>& alpha);
  // logits: (B×C). Mean over the batch of -log softmax(z)[label].
  NodeId cross_entropy_mean(NodeId logits, const std::vector<int>& labels);
  // Mean over the batch of the summed binary cross-entropy between
  // sigmoid(logits) and the one-hot encoding of the label.
  NodeId bce_mean(NodeId logits, const std::vector<int>& labels);
  NodeId sum_abs(NodeId x);

  // Seeds d(loss)/d(loss) = 1 and runs all adjoints in reverse order.
  // Throws ShapeError if loss is not scalar.
  void backward(NodeId loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // empty for leaves
  };

  NodeId push(Tensor value, std::function<void()> back = {});
  Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace choplab
