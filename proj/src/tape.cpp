#include "choplab/tape.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace choplab {

NodeId Tape::push(Tensor value, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
  return nodes_.size() - 1;
}

NodeId Tape::leaf(const Tensor& v) { return push(v); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  NodeId out = push(choplab::matmul(value(a), value(b)));
  nodes_[out].back = [this, a, b, out] {
    add_matmul_nt(grad_mut(a), grad(out), value(b));
    add_matmul_tn(grad_mut(b), value(a), grad(out));
  };
  return out;
}

NodeId Tape::add(NodeId a, NodeId b) {
  NodeId out = push(choplab::add(value(a), value(b)));
  nodes_[out].back = [this, a, b, out] {
    const Tensor& g = grad(out);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  };
  return out;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  NodeId out = push(choplab::sub(value(a), value(b)));
  nodes_[out].back = [this, a, b, out] {
    const Tensor& g = grad(out);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  };
  return out;
}

NodeId Tape::scale(NodeId a, double c) {
  NodeId out = push(choplab::scale(value(a), c));
  nodes_[out].back = [this, a, c, out] {
    const Tensor& g = grad(out);
    Tensor& ga = grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += c * g.data[i];
  };
  return out;
}

NodeId Tape::add_bias_row(NodeId x, NodeId bias) {
  NodeId out = push(choplab::add_bias_row(value(x), value(bias)));
  nodes_[out].back = [this, x, bias, out] {
    const Tensor& g = grad(out);
    Tensor& gx = grad_mut(x);
    Tensor& gb = grad_mut(bias);
    const std::size_t n = g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < n; ++c) gb.data[c] += g.data[r * n + c];
  };
  return out;
}

NodeId Tape::gather_rows(NodeId table, const std::vector<int>& ids) {
  const Tensor& t = value(table);
  const std::size_t n = t.cols();
  Tensor y({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= t.rows())
      throw ShapeError("gather_rows: id out of range");
    for (std::size_t c = 0; c < n; ++c) y.data[r * n + c] = t.data[id * n + c];
  }
  NodeId out = push(std::move(y));
  nodes_[out].back = [this, table, ids, out] {
    const Tensor& g = grad(out);
    Tensor& gt = grad_mut(table);
    const std::size_t n = g.cols();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < n; ++c)
        gt.data[static_cast<std::size_t>(ids[r]) * n + c] += g.data[r * n + c];
  };
  return out;
}

NodeId Tape::pick_rows(NodeId x, const std::vector<std::size_t>& rows) {
  const Tensor& v = value(x);
  const std::size_t n = v.cols();
  Tensor y({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < n; ++c) y.data[r * n + c] = v.data[rows[r] * n + c];
  NodeId out = push(std::move(y));
  nodes_[out].back = [this, x, rows, out] {
    const Tensor& g = grad(out);
    Tensor& gx = grad_mut(x);
    const std::size_t n = g.cols();
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < n; ++c) gx.data[rows[r] * n + c] += g.data[r * n + c];
  };
  return out;
}

NodeId Tape::softmax_rows(NodeId x) {
  NodeId out = push(choplab::softmax_rows(value(x)));
  nodes_[out].back = [this, x, out] {
    const Tensor& y = value(out);
    const Tensor& g = grad(out);
    Tensor& gx = grad_mut(x);
    const std::size_t n = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double* yr = y.data.data() + r * n;
      const double* gr = g.data.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += yr[c] * gr[c];
      double* gxr = gx.data.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) gxr[c] += yr[c] * (gr[c] - dot);
    }
  };
  return out;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& v = value(x);
  const std::size_t n = v.cols();
  // Save normalized rows and inverse stddev for the adjoint.
  auto xhat = std::make_shared<Tensor>(v);
  auto inv_std = std::make_shared<std::vector<double>>(v.rows());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double* row = xhat->data.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < n; ++c) row[c] = (row[c] - mean) * inv;
  }
  Tensor y = *xhat;
  const Tensor& gvals = value(gain);
  const Tensor& bvals = value(bias);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c)
      y.data[r * n + c] = y.data[r * n + c] * gvals.data[c] + bvals.data[c];
  NodeId out = push(std::move(y));
  nodes_[out].back = [this, x, gain, bias, out, xhat, inv_std] {
    const Tensor& g = grad(out);
    const Tensor& gvals = value(gain);
    Tensor& gx = grad_mut(x);
    Tensor& gg = grad_mut(gain);
    Tensor& gb = grad_mut(bias);
    const std::size_t n = g.cols();
    const double dn = static_cast<double>(n);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* gr = g.data.data() + r * n;
      const double* hr = xhat->data.data() + r * n;
      double sum_gh = 0.0, sum_ghh = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double gh = gr[c] * gvals.data[c];
        sum_gh += gh;
        sum_ghh += gh * hr[c];
        gg.data[c] += gr[c] * hr[c];
        gb.data[c] += gr[c];
      }
      const double inv = (*inv_std)[r];
      double* gxr = gx.data.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) {
        const double gh = gr[c] * gvals.data[c];
        gxr[c] += inv * (gh - sum_gh / dn - hr[c] * sum_ghh / dn);
      }
    }
  };
  return out;
}

NodeId Tape::gelu(NodeId x) {
  NodeId out = push(choplab::gelu(value(x)));
  nodes_[out].back = [this, x, out] {
    const Tensor& g = grad(out);
    const Tensor& v = value(x);
    Tensor& gx = grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx.data[i] += g.data[i] * gelu_grad_scalar(v.data[i]);
  };
  return out;
}

NodeId Tape::sigmoid(NodeId x) {
  NodeId out = push(choplab::sigmoid(value(x)));
  nodes_[out].back = [this, x, out] {
    const Tensor& y = value(out);
    const Tensor& g = grad(out);
    Tensor& gx = grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  };
  return out;
}

NodeId Tape::row_mean(NodeId x) {
  const Tensor& v = value(x);
  const std::size_t n = v.cols();
  Tensor y({v.rows(), 1});
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) sum += v.data[r * n + c];
    y.data[r] = sum / static_cast<double>(n);
  }
  NodeId out = push(std::move(y));
  nodes_[out].back = [this, x, out] {
    const Tensor& g = grad(out);
    Tensor& gx = grad_mut(x);
    const std::size_t n = gx.cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < n; ++c)
        gx.data[r * n + c] += g.data[r] / static_cast<double>(n);
  };
  return out;
}

NodeId Tape::lerp_rows_by_example(NodeId a, NodeId b, NodeId s, std::size_t seq) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  const Tensor& vs = value(s);
  if (!va.same_shape(vb)) throw ShapeError("lerp: operand shapes differ");
  if (va.rows() % seq != 0 || vs.rows() != va.rows() / seq)
    throw ShapeError("lerp: batch/seq mismatch");
  Tensor y = va;
  const std::size_t n = va.cols();
  for (std::size_t e = 0; e < vs.rows(); ++e) {
    const double se = vs.data[e];
    for (std::size_t r = e * seq; r < (e + 1) * seq; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t i = r * n + c;
        y.data[i] = va.data[i] + se * (vb.data[i] - va.data[i]);
      }
  }
  NodeId out = push(std::move(y));
  nodes_[out].back = [this, a, b, s, seq, out] {
    const Tensor& g = grad(out);
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const Tensor& vs = value(s);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    Tensor& gs = grad_mut(s);
    const std::size_t n = va.cols();
    for (std::size_t e = 0; e < vs.rows(); ++e) {
      const double se = vs.data[e];
      double acc = 0.0;
      for (std::size_t r = e * seq; r < (e + 1) * seq; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          const std::size_t i = r * n + c;
          ga.data[i] += (1.0 - se) * g.data[i];
          gb.data[i] += se * g.data[i];
          acc += g.data[i] * (vb.data[i] - va.data[i]);
        }
      gs.data[e] += acc;
    }
  };
  return out;
}

namespace {

// Copies the (seq × d_head) block of head h / example e out of a
// stacked (B·S)×d matrix.
Tensor head_block(const Tensor& x, std::size_t e, std::size_t h, std::size_t seq,
                  std::size_t d_head) {
  const std::size_t d = x.cols();
  Tensor out({seq, d_head});
  for (std::size_t r = 0; r < seq; ++r)
    for (std::size_t c = 0; c < d_head; ++c)
      out.data[r * d_head + c] = x.data[(e * seq + r) * d + h * d_head + c];
  return out;
}

void add_head_block(Tensor& x, const Tensor& block, std::size_t e, std::size_t h,
                    std::size_t seq, std::size_t d_head) {
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < seq; ++r)
    for (std::size_t c = 0; c < d_head; ++c)
      x.data[(e * seq + r) * d + h * d_head + c] += block.data[r * d_head + c];
}

}  // namespace

NodeId Tape::batched_attention(NodeId q, NodeId k, NodeId v, std::size_t batch,
                               std::size_t seq, std::size_t heads,
                               const std::vector<double>& alpha) {
  const Tensor& vq = value(q);
  const std::size_t d = vq.cols();
  if (d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  if (alpha.size() != heads) throw ShapeError("attention: alpha length != heads");
  if (vq.rows() != batch * seq) throw ShapeError("attention: rows != batch*seq");
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  auto weights = std::make_shared<std::vector<Tensor>>();
  weights->reserve(batch * heads);
  Tensor y({batch * seq, d});
  for (std::size_t e = 0; e < batch; ++e) {
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = head_block(vq, e, h, seq, dh);
      Tensor kh = head_block(value(k), e, h, seq, dh);
      Tensor vh = head_block(value(v), e, h, seq, dh);
      Tensor a = choplab::softmax_rows(choplab::scale(matmul_nt(qh, kh), sc));
      Tensor oh = choplab::scale(choplab::matmul(a, vh), alpha[h]);
      add_head_block(y, oh, e, h, seq, dh);
      weights->push_back(std::move(a));
    }
  }
  NodeId out = push(std::move(y));
  nodes_[out].back = [this, q, k, v, batch, seq, heads, alpha, weights, out, dh, sc] {
    const Tensor& g = grad(out);
    for (std::size_t e = 0; e < batch; ++e) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Tensor& a = (*weights)[e * heads + h];
        Tensor go = choplab::scale(head_block(g, e, h, seq, dh), alpha[h]);
        Tensor qh = head_block(value(q), e, h, seq, dh);
        Tensor kh = head_block(value(k), e, h, seq, dh);
        Tensor vh = head_block(value(v), e, h, seq, dh);
        Tensor gv = matmul_tn(a, go);
        Tensor ga = matmul_nt(go, vh);
        // softmax adjoint per row
        Tensor gscore = a;
        for (std::size_t r = 0; r < seq; ++r) {
          const double* ar = a.data.data() + r * seq;
          const double* gr = ga.data.data() + r * seq;
          double dot = 0.0;
          for (std::size_t c = 0; c < seq; ++c) dot += ar[c] * gr[c];
          double* sr = gscore.data.data() + r * seq;
          for (std::size_t c = 0; c < seq; ++c) sr[c] = ar[c] * (gr[c] - dot);
        }
        Tensor gq = choplab::scale(choplab::matmul(gscore, kh), sc);
        Tensor gk = choplab::scale(matmul_tn(gscore, qh), sc);
        add_head_block(grad_mut(q), gq, e, h, seq, dh);
        add_head_block(grad_mut(k), gk, e, h, seq, dh);
        add_head_block(grad_mut(v), gv, e, h, seq, dh);
      }
    }
  };
  return out;
}

NodeId Tape::cross_entropy_mean(NodeId logits, const std::vector<int>& labels) {
  const Tensor& z = value(logits);
  if (z.rows() != labels.size()) throw ShapeError("cross_entropy: label count mismatch");
  auto probs = std::make_shared<Tensor>(choplab::softmax_rows(z));
  const std::size_t n = z.cols();
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double* row = z.data.data() + r * n;
    double mx = row[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double lse = 0.0;
    for (std::size_t c = 0; c < n; ++c) lse += std::exp(row[c] - mx);
    loss += mx + std::log(lse) - row[labels[r]];
  }
  loss /= static_cast<double>(z.rows());
  NodeId out = push(Tensor::scalar(loss));
  nodes_[out].back = [this, logits, labels, probs, out] {
    const double g = grad(out).data[0];
    Tensor& gz = grad_mut(logits);
    const std::size_t n = gz.cols();
    const double inv_b = 1.0 / static_cast<double>(gz.rows());
    for (std::size_t r = 0; r < gz.rows(); ++r) {
      for (std::size_t c = 0; c < n; ++c)
        gz.data[r * n + c] += g * inv_b * probs->data[r * n + c];
      gz.data[r * n + labels[r]] -= g * inv_b;
    }
  };
  return out;
}

NodeId Tape::bce_mean(NodeId logits, const std::vector<int>& labels) {
  const Tensor& z = value(logits);
  if (z.rows() != labels.size()) throw ShapeError("bce: label count mismatch");
  const std::size_t n = z.cols();
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double zc = z.data[r * n + c];
      const double y = (static_cast<std::size_t>(labels[r]) == c) ? 1.0 : 0.0;
      // max(z,0) - z*y + log(1 + exp(-|z|)), the stable form.
      loss += std::max(zc, 0.0) - zc * y + std::log1p(std::exp(-std::abs(zc)));
    }
  }
  loss /= static_cast<double>(z.rows());
  NodeId out = push(Tensor::scalar(loss));
  nodes_[out].back = [this, logits, labels, out] {
    const double g = grad(out).data[0];
    const Tensor& z = value(logits);
    Tensor& gz = grad_mut(logits);
    const std::size_t n = z.cols();
    const double inv_b = 1.0 / static_cast<double>(z.rows());
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const double y = (static_cast<std::size_t>(labels[r]) == c) ? 1.0 : 0.0;
        gz.data[r * n + c] += g * inv_b * (sigmoid_scalar(z.data[r * n + c]) - y);
      }
  };
  return out;
}

NodeId Tape::sum_abs(NodeId x) {
  const Tensor& v = value(x);
  double s = 0.0;
  for (double e : v.data) s += std::abs(e);
  NodeId out = push(Tensor::scalar(s));
  nodes_[out].back = [this, x, out] {
    const double g = grad(out).data[0];
    const Tensor& v = value(x);
    Tensor& gx = grad_mut(x);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v.data[i] > 0.0)
        gx.data[i] += g;
      else if (v.data[i] < 0.0)
        gx.data[i] -= g;
    }
  };
  return out;
}

void Tape::backward(NodeId loss) {
  if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar");
  for (Node& n : nodes_) {
    n.grad.shape = n.value.shape;
    n.grad.data.assign(n.value.size(), 0.0);
  }
  nodes_[loss].grad.data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

}  // namespace choplab
