#pragma once

#include "promptcap/autodiff.hpp"
#include "promptcap/decoder.hpp"
#include "promptcap/embedding_space.hpp"
#include "promptcap/inference.hpp"

#include <filesystem>
#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <random>
#include <string>
#include <vector>

namespace promptcap::test {

inline constexpr bool kDoublePrecision = sizeof(real) == 8;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, real scale = 1) {
  std::normal_distribution<real> g(0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline UnitVector random_unit(Index dim, Rng& rng) {
  std::normal_distribution<real> g(0, 1);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = g(rng);
  return normalize(v);
}

// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
// `floor` keeps an exactly-zero gradient from turning round-off into a 100% error.
inline real relative_error(const Matrix& a, const Matrix& b, real floor = real(1e-12)) {
  const real scale = std::max({a.norm(), b.norm(), floor});
  if (scale <= real(1e-12)) return 0;
  return (a - b).norm() / scale;
}

// Builds an op's output from the bound inputs.
using OpBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Reduces an output to a scalar with fixed random bilinear probes:
// s = sum_j u_j^T out w_j.
struct Probe {
  std::vector<Matrix> left, right;

  Probe(Index rows, Index cols, Rng& rng) {
    for (int j = 0; j < 3; ++j) {
      left.push_back(random_matrix(1, rows, rng));
      right.push_back(random_matrix(cols, 1, rng));
    }
  }

  Var apply(Graph& g, Var out) const {
    Var total;
    for (std::size_t j = 0; j < left.size(); ++j) {
      Var term = matmul(matmul(g.constant(left[j]), out), g.constant(right[j]));
      total = total.valid() ? add(total, term) : term;
    }
    return total;
  }
};

// Largest relative error, over the inputs, between backprop gradients and
// central differences with step h.
inline real gradient_error(std::vector<Matrix> inputs, const OpBuilder& build, Rng& rng, real h = real(1e-5)) {
  Index out_rows = 0, out_cols = 0;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Matrix& m : inputs) vars.push_back(g.input(m, false));
    const Var out = build(g, vars);
    out_rows = out.rows();
    out_cols = out.cols();
  }
  const Probe probe(out_rows, out_cols, rng);
  auto eval = [&](const std::vector<Matrix>& xs) {
    Graph g;
    std::vector<Var> vars;
    for (const Matrix& m : xs) vars.push_back(g.input(m, false));
    return probe.apply(g, build(g, vars)).value()(0, 0);
  };

  Graph g;
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(g.input(m, true));
  const Var s = probe.apply(g, build(g, vars));
  g.backward(s);

  real worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const real saved = inputs[k].data()[i];
      inputs[k].data()[i] = saved + h;
      const real up = eval(inputs);
      inputs[k].data()[i] = saved - h;
      const real down = eval(inputs);
      inputs[k].data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const Matrix analytic = vars[k].grad().size() ? vars[k].grad() : Matrix::Zero(numeric.rows(), numeric.cols());
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

// Tiny decoder plus one teacher-forced example, with weights spread wider
// than the init so every nonlinearity is exercised.
struct TinyDecoderCase {
  DecoderParameters params;
  PromptSet prompts;
  std::vector<int> input, target;
  int lang = 0;
  UnitVector feature;
};

inline TinyDecoderCase tiny_decoder_case(std::uint64_t seed, Index prompts = 2) {
  DecoderConfig cfg;
  cfg.vocab_size = 11;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 24;
  cfg.max_len = 12;
  cfg.n_languages = 2;
  cfg.d_clip = 6;
  Rng rng(seed);
  TinyDecoderCase c;
  c.params = init_decoder(cfg, rng);
  c.params.visit([&](const std::string& name, Tensor& t) {
    const bool gain = name.find("gain") != std::string::npos;
    t.value = random_matrix(t.value.rows(), t.value.cols(), rng, real(0.3));
    if (gain) t.value.array() += 1;
  });
  Matrix pf(prompts, cfg.d_clip);
  for (Index i = 0; i < prompts; ++i) pf.row(i) = random_unit(cfg.d_clip, rng).values().transpose();
  c.prompts = PromptSet{pf, {}, {}};
  for (Index i = 0; i < prompts; ++i) {
    c.prompts.indices.push_back(i);
    c.prompts.similarities.push_back(0);
  }
  std::uniform_int_distribution<int> tok(kNumSpecial, cfg.vocab_size - 1);
  c.input = {kBos};
  for (int i = 0; i < 4; ++i) c.input.push_back(tok(rng));
  c.target.assign(c.input.begin() + 1, c.input.end());
  c.target.push_back(kEos);
  c.lang = static_cast<int>(seed % 2);
  c.feature = random_unit(cfg.d_clip, rng);
  return c;
}

inline real tiny_loss(const TinyDecoderCase& c) {
  Graph g;
  DecoderGraph dg(g, c.params);
  const InputSequence in = dg.build_input(c.prompts, c.input, c.lang);
  return softmax_cross_entropy_smoothed(dg.logits(in, c.feature), c.target, real(0.1), kPad).value()(0, 0);
}

// Per parameter tensor: relative error between backprop and central
// differences of the smoothed loss.
inline std::vector<std::pair<std::string, real>> decoder_gradient_errors(TinyDecoderCase& c, real h = real(1e-5)) {
  c.params.zero_grad();
  {
    Graph g;
    DecoderGraph dg(g, c.params);
    const InputSequence in = dg.build_input(c.prompts, c.input, c.lang);
    g.backward(softmax_cross_entropy_smoothed(dg.logits(in, c.feature), c.target, real(0.1), kPad));
  }
  std::vector<std::pair<std::string, real>> out;
  c.params.visit([&](const std::string& name, Tensor& t) {
    Matrix numeric(t.value.rows(), t.value.cols());
    for (Index i = 0; i < t.value.size(); ++i) {
      const real saved = t.value.data()[i];
      t.value.data()[i] = saved + h;
      const real up = tiny_loss(c);
      t.value.data()[i] = saved - h;
      const real down = tiny_loss(c);
      t.value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const Matrix analytic = t.has_grad() ? t.grad : Matrix::Zero(numeric.rows(), numeric.cols());
    // Central differences at h = 1e-5 carry about 1e-11 of round-off per entry; some
    // gradients (the key bias, under softmax shift invariance) are exactly zero.
    out.emplace_back(name, relative_error(analytic, numeric, real(1e-5)));
  });
  return out;
}

// Step function over a fixed random table of log-distributions per prefix.
struct RandomTree {
  Index vocab;
  std::uint64_t seed;
  Vector operator()(std::span<const int> prefix) const {
    std::uint64_t h = seed;
    for (int t : prefix) h = splitmix64(h ^ static_cast<std::uint64_t>(t + 1));
    Rng rng(h);
    std::normal_distribution<real> g(0, 2);
    Matrix z(1, vocab);
    for (Index v = 0; v < vocab; ++v) z(0, v) = g(rng);
    return log_softmax_rows(z).row(0).transpose();
  }
};

// Every sequence of at most max_len steps: EOS ends it, otherwise it is cut at max_len.
inline void enumerate(const StepFn& step, int max_len, std::vector<int>& prefix, real lp, std::vector<Hypothesis>& out) {
  const Vector dist = step(prefix);
  for (Index v = 0; v < dist.size(); ++v) {
    if (dist(v) == -std::numeric_limits<real>::infinity()) continue;
    const real total = lp + dist(v);
    if (v == kEos) {
      out.push_back({prefix, total, true, total});
    } else if (static_cast<int>(prefix.size()) + 1 == max_len) {
      prefix.push_back(static_cast<int>(v));
      out.push_back({prefix, total, false, total});
      prefix.pop_back();
    } else {
      prefix.push_back(static_cast<int>(v));
      enumerate(step, max_len, prefix, total, out);
      prefix.pop_back();
    }
  }
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("promptcap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace promptcap::test
