#include "promptcap/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace promptcap {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(ErrorKind::dimension,
              std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Matrix value) {
  Node n;
  n.own = std::move(value);
  return push(std::move(n));
}

Var Graph::input(Matrix value, bool requires_grad) {
  Node n;
  n.own = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::param(Tensor& tensor) {
  Node n;
  n.external = &tensor.value;
  n.needs_grad = tensor.requires_grad;
  n.sink = tensor.requires_grad ? &tensor : nullptr;
  return push(std::move(n));
}

Var Graph::frozen(const Tensor& tensor) {
  Node n;
  n.external = &tensor.value;
  return push(std::move(n));
}

Var Graph::record(Matrix value, std::vector<int> inputs, BackwardFn fn) {
  Node n;
  n.own = std::move(value);
  for (int id : inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Graph::backward(Var output) {
  if (output.graph_ != this) throw Error(ErrorKind::argument, "backward: variable from another graph");
  const Matrix& out = value(output.id_);
  if (out.rows() != 1 || out.cols() != 1) {
    throw Error(ErrorKind::dimension, "backward: output must be scalar, got " + shape_str(out));
  }
  if (!nodes_[output.id_].needs_grad) return;
  nodes_[output.id_].grad = Matrix::Ones(1, 1);
  for (int id = output.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.sink) {
      if (n.sink->grad.size() == 0) {
        n.sink->grad = n.grad;
      } else {
        n.sink->grad += n.grad;
      }
    }
  }
}

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out = av * bv;
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Matrix& dc = g.grad(self);
    if (g.needs_grad(ia)) g.accumulate(ia, dc * g.value(ib).transpose());
    if (g.needs_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * dc);
  });
}

Var add(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const int ia = a.id(), ib = b.id();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return a.graph().record(av + bv, {ia, ib}, [ia, ib](Graph& g, int self) {
      g.accumulate(ia, g.grad(self));
      g.accumulate(ib, g.grad(self));
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix out = av.rowwise() + bv.row(0);
    return a.graph().record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
      g.accumulate(ia, g.grad(self));
      g.accumulate(ib, g.grad(self).colwise().sum());
    });
  }
  shape_error("add", av, bv);
}

Var scale(Var a, real factor) {
  const int ia = a.id();
  return a.graph().record(a.value() * factor, {ia}, [ia, factor](Graph& g, int self) {
    g.accumulate(ia, g.grad(self) * factor);
  });
}

Var relu(Var a) {
  const int ia = a.id();
  return a.graph().record(a.value().cwiseMax(real(0)), {ia}, [ia](Graph& g, int self) {
    const Matrix& x = g.value(ia);
    g.accumulate(ia, g.grad(self).cwiseProduct((x.array() > real(0)).cast<real>().matrix()));
  });
}

Var gelu(Var a) {
  // exact form: x * Phi(x)
  const int ia = a.id();
  const real inv_sqrt2 = real(1) / std::numbers::sqrt2_v<real>;
  Matrix out = a.value().unaryExpr([inv_sqrt2](real x) {
    return real(0.5) * x * (real(1) + std::erf(x * inv_sqrt2));
  });
  return a.graph().record(std::move(out), {ia}, [ia, inv_sqrt2](Graph& g, int self) {
    const real inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<real>;
    Matrix d = g.value(ia).unaryExpr([&](real x) {
      return real(0.5) * (real(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-real(0.5) * x * x);
    });
    g.accumulate(ia, g.grad(self).cwiseProduct(d));
  });
}

Var layer_norm(Var x, Var gain, Var bias, real eps) {
  const Matrix& xv = x.value();
  const Index d = xv.cols();
  if (gain.rows() != 1 || gain.cols() != d) shape_error("layer_norm gain", xv, gain.value());
  if (bias.rows() != 1 || bias.cols() != d) shape_error("layer_norm bias", xv, bias.value());
  if (!(eps > 0)) throw Error(ErrorKind::argument, "layer_norm: eps must be positive");

  Matrix xhat(xv.rows(), d);
  Vector inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const real mean = xv.row(r).mean();
    const real var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = real(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);

  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, int self) {
        const Matrix& dy = g.grad(self);
        if (g.needs_grad(ig)) g.accumulate(ig, dy.cwiseProduct(xhat).colwise().sum());
        if (g.needs_grad(ib)) g.accumulate(ib, dy.colwise().sum());
        if (g.needs_grad(ix)) {
          Matrix dxhat = (dy.array().rowwise() * g.value(ig).row(0).array()).matrix();
          Matrix dx(dy.rows(), dy.cols());
          for (Index r = 0; r < dy.rows(); ++r) {
            const real m1 = dxhat.row(r).mean();
            const real m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
          }
          g.accumulate(ix, dx);
        }
      });
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const real m = logits.row(r).maxCoeff();
    const real lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Var softmax_cross_entropy_smoothed(Var logits, std::span<const int> targets, real smoothing,
                                   int ignore_index) {
  const Matrix& z = logits.value();
  const Index rows = z.rows(), vocab = z.cols();
  if (static_cast<Index>(targets.size()) != rows) {
    throw Error(ErrorKind::dimension, "cross_entropy: " + std::to_string(targets.size()) +
                                          " targets for logits " + shape_str(z));
  }
  if (!(smoothing >= 0 && smoothing < 1)) throw Error(ErrorKind::argument, "cross_entropy: smoothing outside [0,1)");
  if (smoothing > 0 && vocab < 2) throw Error(ErrorKind::argument, "cross_entropy: smoothing needs >= 2 classes");

  const real off = vocab > 1 ? smoothing / real(vocab - 1) : real(0);
  const real on = real(1) - smoothing;
  Matrix logp = log_softmax_rows(z);
  real total = 0;
  Index counted = 0;
  for (Index r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || t >= vocab) {
      throw Error(ErrorKind::bound, "cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                                        std::to_string(vocab));
    }
    real row_loss = -on * logp(r, t);
    if (off > 0) row_loss -= off * (logp.row(r).sum() - logp(r, t));
    total += row_loss;
    ++counted;
  }
  if (counted == 0) throw Error(ErrorKind::undefined_mean, "cross_entropy: every position is ignored");

  Matrix out(1, 1);
  out(0, 0) = total / real(counted);
  std::vector<int> kept(targets.begin(), targets.end());
  const int iz = logits.id();
  return logits.graph().record(
      std::move(out), {iz},
      [iz, logp = std::move(logp), kept = std::move(kept), on, off, ignore_index, counted](Graph& g, int self) {
        const real upstream = g.grad(self)(0, 0) / real(counted);
        Matrix dz = Matrix::Zero(logp.rows(), logp.cols());
        for (Index r = 0; r < logp.rows(); ++r) {
          const int t = kept[r];
          if (t == ignore_index) continue;
          // d/dz of -sum q log softmax(z) = softmax(z) - q
          dz.row(r) = logp.row(r).array().exp() - off;
          dz(r, t) += off - on;
        }
        g.accumulate(iz, dz * upstream);
      });
}

Var attention(Var q, Var k, Var v, const Mask& mask) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  if (qv.cols() != kv.cols()) shape_error("attention q/k", qv, kv);
  if (kv.rows() != vv.rows()) shape_error("attention k/v", kv, vv);
  if (mask.rows() != qv.rows() || mask.cols() != kv.rows()) {
    throw Error(ErrorKind::dimension, "attention: mask [" + std::to_string(mask.rows()) + "x" +
                                          std::to_string(mask.cols()) + "] for scores [" +
                                          std::to_string(qv.rows()) + "x" + std::to_string(kv.rows()) + "]");
  }
  const real inv_scale = real(1) / std::sqrt(static_cast<real>(qv.cols()));
  Matrix probs = (qv * kv.transpose()) * inv_scale;
  for (Index r = 0; r < probs.rows(); ++r) {
    real m = -std::numeric_limits<real>::infinity();
    for (Index c = 0; c < probs.cols(); ++c) {
      if (mask(r, c)) m = std::max(m, probs(r, c));
    }
    if (!mask.row(r).any()) throw Error(ErrorKind::masking, "attention: row " + std::to_string(r) + " fully masked");
    real sum = 0;
    for (Index c = 0; c < probs.cols(); ++c) {
      probs(r, c) = mask(r, c) ? std::exp(probs(r, c) - m) : real(0);
      sum += probs(r, c);
    }
    probs.row(r) /= sum;
  }
  Matrix out = probs * vv;
  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph().record(std::move(out), {iq, ik, iv},
                          [iq, ik, iv, inv_scale, probs = std::move(probs)](Graph& g, int self) {
                            const Matrix& dout = g.grad(self);
                            if (g.needs_grad(iv)) g.accumulate(iv, probs.transpose() * dout);
                            if (!g.needs_grad(iq) && !g.needs_grad(ik)) return;
                            Matrix dp = dout * g.value(iv).transpose();
                            Vector row_dot = dp.cwiseProduct(probs).rowwise().sum();
                            Matrix ds = (probs.array() * (dp.colwise() - row_dot).array()).matrix() * inv_scale;
                            if (g.needs_grad(iq)) g.accumulate(iq, ds * g.value(ik));
                            if (g.needs_grad(ik)) g.accumulate(ik, ds.transpose() * g.value(iq));
                          });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  const Matrix& t = table.value();
  Matrix out(static_cast<Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw Error(ErrorKind::vocabulary, "embedding_lookup: id " + std::to_string(ids[i]) + " outside table of " +
                                             std::to_string(t.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = t.row(ids[i]);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  const int it = table.id();
  return table.graph().record(std::move(out), {it}, [it, kept = std::move(kept)](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    Matrix dt = Matrix::Zero(g.value(it).rows(), g.value(it).cols());
    for (std::size_t i = 0; i < kept.size(); ++i) dt.row(kept[i]) += dy.row(static_cast<Index>(i));
    g.accumulate(it, dt);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::empty_input, "concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return parts[0].graph().record(std::move(out), ids, [ids, offsets](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (g.needs_grad(ids[i])) g.accumulate(ids[i], dy.middleRows(offsets[i], g.value(ids[i]).rows()));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::empty_input, "concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  return parts[0].graph().record(std::move(out), ids, [ids, offsets](Graph& g, int self) {
    const Matrix& dy = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (g.needs_grad(ids[i])) g.accumulate(ids[i], dy.middleCols(offsets[i], g.value(ids[i]).cols()));
    }
  });
}

Var slice_rows(Var a, Index start, Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) {
    throw Error(ErrorKind::bound, "slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                                      ") outside " + shape_str(av));
  }
  const int ia = a.id();
  return a.graph().record(av.middleRows(start, count), {ia}, [ia, start, count](Graph& g, int self) {
    Matrix d = Matrix::Zero(g.value(ia).rows(), g.value(ia).cols());
    d.middleRows(start, count) = g.grad(self);
    g.accumulate(ia, d);
  });
}

Var slice_cols(Var a, Index start, Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw Error(ErrorKind::bound, "slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                                      ") outside " + shape_str(av));
  }
  const int ia = a.id();
  return a.graph().record(av.middleCols(start, count), {ia}, [ia, start, count](Graph& g, int self) {
    Matrix d = Matrix::Zero(g.value(ia).rows(), g.value(ia).cols());
    d.middleCols(start, count) = g.grad(self);
    g.accumulate(ia, d);
  });
}

Var mean_rows(Var a) {
  const Matrix& av = a.value();
  if (av.rows() == 0) throw Error(ErrorKind::empty_input, "mean_rows: no rows");
  const int ia = a.id();
  Matrix out = av.colwise().mean();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Index n = g.value(ia).rows();
    g.accumulate(ia, g.grad(self).replicate(n, 1) / static_cast<real>(n));
  });
}

Var dropout(Var a, real rate, bool training, Rng& rng) {
  if (!(rate >= 0 && rate < 1)) throw Error(ErrorKind::argument, "dropout: rate outside [0,1)");
  if (!training || rate == 0) return a;
  const Matrix& av = a.value();
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const real scale_kept = real(1) / (real(1) - rate);
  Matrix m(av.rows(), av.cols());
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? scale_kept : real(0);
  Matrix out = av.cwiseProduct(m);
  const int ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, m = std::move(m)](Graph& g, int self) {
    g.accumulate(ia, g.grad(self).cwiseProduct(m));
  });
}

}  // namespace promptcap
