#include <cmath>
#include <numbers>
#include <memory>

#include "inflect/autodiff.hpp"
#include "inflect/kernels.hpp"

namespace inflect {

namespace {

using RowMat = RowMatrix<double>;

Graph& same_graph(Var a, Var b, const char* op) {
  Graph& g = a.graph();
  if (&b.graph() != &g) throw InvalidInput(std::string(op) + ": operands live in different graphs");
  return g;
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
  }
}

template <typename F, typename D>
Var unary(const char* op, Var x, F f, D df) {
  Graph& g = x.graph();
  Tensor out(x.shape());
  const auto& in = x.value().values();
  for (Index i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const std::size_t xi = x.id();
  return g.push(op, std::move(out), {xi}, [xi, df](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const auto& xv = g.value(xi).values();
    const auto& yv = g.value(self).values();
    const auto& dy = g.grad_vector(self);
    auto& dx = g.grad_vector(xi);
    for (Index i = 0; i < dy.size(); ++i) dx[i] += dy[i] * df(xv[i], yv[i]);
  });
}

struct BlockLayout {
  Index blocks;
  Index rows;
  Index cols;
};

BlockLayout block_layout(const Shape& s, const char* op) {
  if (s.size() < 2) throw InvalidInput(std::string(op) + ": need rank >= 2, got " + shape_string(s));
  const Index rows = s[s.size() - 2];
  const Index cols = s.back();
  return {shape_size(s) / std::max<Index>(rows * cols, 1), rows, cols};
}

}  // namespace

Var linear(Var x, Var w) {
  Graph& g = same_graph(x, w, "linear");
  if (w.value().rank() != 2 || w.shape()[1] != x.value().cols()) {
    throw InvalidInput("linear: weight " + shape_string(w.shape()) + " incompatible with input " +
                       shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape.back() = w.shape()[0];
  Tensor out(shape);
  out.matrix().noalias() = x.value().matrix() * w.value().matrix().transpose();
  const std::size_t xi = x.id(), wi = w.id();
  return g.push("linear", std::move(out), {xi, wi}, [xi, wi](Graph& g, std::size_t self) {
    const auto dy = g.grad_matrix(self);
    if (g.needs_grad(xi)) g.grad_matrix(xi).noalias() += dy * g.value(wi).matrix();
    if (g.needs_grad(wi)) g.grad_matrix(wi).noalias() += dy.transpose() * g.value(xi).matrix();
  });
}

Var linear(Var x, Var w, Var b) {
  Graph& g = same_graph(x, b, "linear");
  if (b.value().size() != w.shape()[0]) throw InvalidInput("linear: bias length mismatch");
  Var y = linear(x, w);
  Tensor out = y.value();
  out.matrix().rowwise() += b.value().values().transpose();
  const std::size_t yi = y.id(), bi = b.id();
  return g.push("bias_add", std::move(out), {yi, bi}, [yi, bi](Graph& g, std::size_t self) {
    const auto dy = g.grad_matrix(self);
    if (g.needs_grad(yi)) g.grad_matrix(yi) += dy;
    if (g.needs_grad(bi)) g.grad_vector(bi) += dy.colwise().sum().transpose();
  });
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw InvalidInput("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[1]});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  const std::size_t ai = a.id(), bi = b.id();
  return g.push("matmul", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto dy = g.grad_matrix(self);
    if (g.needs_grad(ai)) g.grad_matrix(ai).noalias() += dy * g.value(bi).matrix().transpose();
    if (g.needs_grad(bi)) g.grad_matrix(bi).noalias() += g.value(ai).matrix().transpose() * dy;
  });
}

Var batched_matmul(Var a, Var b, bool transpose_b) {
  Graph& g = same_graph(a, b, "batched_matmul");
  const BlockLayout la = block_layout(a.shape(), "batched_matmul");
  const BlockLayout lb = block_layout(b.shape(), "batched_matmul");
  const bool leading_match = a.value().rank() == b.value().rank() &&
                             std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin());
  const Index inner = transpose_b ? lb.cols : lb.rows;
  const Index n = transpose_b ? lb.rows : lb.cols;
  if (!leading_match || la.cols != inner) {
    throw InvalidInput("batched_matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                       shape_string(b.shape()));
  }
  Shape shape = a.shape();
  shape.back() = n;
  Tensor out(shape);
  using Map = Eigen::Map<RowMat>;
  using CMap = Eigen::Map<const RowMat>;
  const double* pa = a.value().values().data();
  const double* pb = b.value().values().data();
  double* po = out.values().data();
  for (Index k = 0; k < la.blocks; ++k) {
    CMap ma(pa + k * la.rows * la.cols, la.rows, la.cols);
    CMap mb(pb + k * lb.rows * lb.cols, lb.rows, lb.cols);
    Map mo(po + k * la.rows * n, la.rows, n);
    if (transpose_b) {
      mo.noalias() = ma * mb.transpose();
    } else {
      mo.noalias() = ma * mb;
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return g.push("batched_matmul", std::move(out), {ai, bi},
                [ai, bi, la, lb, n, transpose_b](Graph& g, std::size_t self) {
                  const double* pa = g.value(ai).values().data();
                  const double* pb = g.value(bi).values().data();
                  const double* pdy = g.grad_vector(self).data();
                  const bool need_a = g.needs_grad(ai), need_b = g.needs_grad(bi);
                  double* pda = need_a ? g.grad_vector(ai).data() : nullptr;
                  double* pdb = need_b ? g.grad_vector(bi).data() : nullptr;
                  for (Index k = 0; k < la.blocks; ++k) {
                    CMap ma(pa + k * la.rows * la.cols, la.rows, la.cols);
                    CMap mb(pb + k * lb.rows * lb.cols, lb.rows, lb.cols);
                    CMap dy(pdy + k * la.rows * n, la.rows, n);
                    if (need_a) {
                      Map da(pda + k * la.rows * la.cols, la.rows, la.cols);
                      if (transpose_b) {
                        da.noalias() += dy * mb;
                      } else {
                        da.noalias() += dy * mb.transpose();
                      }
                    }
                    if (need_b) {
                      Map db(pdb + k * lb.rows * lb.cols, lb.rows, lb.cols);
                      if (transpose_b) {
                        db.noalias() += dy.transpose() * ma;
                      } else {
                        db.noalias() += ma.transpose() * dy;
                      }
                    }
                  }
                });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b, "add");
  require_same_shape(a, b, "add");
  Tensor out(a.shape(), a.value().values() + b.value().values());
  const std::size_t ai = a.id(), bi = b.id();
  return g.push("add", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto& dy = g.grad_vector(self);
    if (g.needs_grad(ai)) g.grad_vector(ai) += dy;
    if (g.needs_grad(bi)) g.grad_vector(bi) += dy;
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b, "mul");
  require_same_shape(a, b, "mul");
  Tensor out(a.shape(), a.value().values().cwiseProduct(b.value().values()));
  const std::size_t ai = a.id(), bi = b.id();
  return g.push("mul", std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const auto& dy = g.grad_vector(self);
    if (g.needs_grad(ai)) g.grad_vector(ai) += dy.cwiseProduct(g.value(bi).values());
    if (g.needs_grad(bi)) g.grad_vector(bi) += dy.cwiseProduct(g.value(ai).values());
  });
}

Var scale(Var a, double c) {
  Graph& g = a.graph();
  Tensor out(a.shape(), a.value().values() * c);
  const std::size_t ai = a.id();
  return g.push("scale", std::move(out), {ai}, [ai, c](Graph& g, std::size_t self) {
    if (g.needs_grad(ai)) g.grad_vector(ai) += g.grad_vector(self) * c;
  });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Graph& g = x.graph();
  Tensor out(x.shape());
  const auto& in = x.value().values();
  auto slope = std::make_shared<Vector<double>>(in.size());
  for (Index i = 0; i < in.size(); ++i) {
    const double v = in[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    out[i] = v * cdf;
    (*slope)[i] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  }
  const std::size_t xi = x.id();
  return g.push("gelu", std::move(out), {xi}, [xi, slope](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    g.grad_vector(xi).array() += g.grad_vector(self).array() * slope->array();
  });
}

Var softmax(Var x) {
  Graph& g = x.graph();
  Tensor out(x.shape());
  out.matrix() = softmax_rows(x.value().matrix());
  const std::size_t xi = x.id();
  return g.push("softmax", std::move(out), {xi}, [xi](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const auto y = g.value(self).matrix();
    const auto dy = g.grad_matrix(self);
    auto dx = g.grad_matrix(xi);
    for (Index r = 0; r < y.rows(); ++r) {
      const double dot = y.row(r).dot(dy.row(r));
      dx.row(r).array() += y.row(r).array() * (dy.row(r).array() - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = same_graph(x, gamma, "layer_norm");
  const Index d = x.value().cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw InvalidInput("layer_norm: gamma/beta must have length " + std::to_string(d));
  }
  const auto xm = x.value().matrix();
  const Index rows = xm.rows();
  RowMat xhat(rows, d);
  Vector<double> inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mu = xm.row(r).mean();
    const double var = (xm.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xm.row(r).array() - mu) * inv_std[r];
  }
  Tensor out(x.shape());
  const auto& gv = gamma.value().values();
  const auto& bv = beta.value().values();
  out.matrix() = (xhat.array().rowwise() * gv.transpose().array()).rowwise() + bv.transpose().array();
  const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id();
  return g.push("layer_norm", std::move(out), {xi, gi, bi},
                [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
                  const auto dy = g.grad_matrix(self);
                  if (g.needs_grad(gi)) g.grad_vector(gi) += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
                  if (g.needs_grad(bi)) g.grad_vector(bi) += dy.colwise().sum().transpose();
                  if (!g.needs_grad(xi)) return;
                  const auto& gv = g.value(gi).values();
                  auto dx = g.grad_matrix(xi);
                  for (Index r = 0; r < dy.rows(); ++r) {
                    const Eigen::ArrayXd dxhat = dy.row(r).transpose().array() * gv.array();
                    const double m1 = dxhat.mean();
                    const double m2 = (dxhat * xhat.row(r).transpose().array()).mean();
                    dx.row(r).array() +=
                        (inv_std[r] * (dxhat - m1 - xhat.row(r).transpose().array() * m2)).transpose();
                  }
                });
}

Var dropout(Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw InvalidInput("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  Graph& g = x.graph();
  g.mark_stochastic();
  Vector<double> mask(x.value().size());
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(p) ? 0.0 : keep;
  Tensor out(x.shape(), x.value().values().cwiseProduct(mask));
  const std::size_t xi = x.id();
  return g.push("dropout", std::move(out), {xi}, [xi, mask = std::move(mask)](Graph& g, std::size_t self) {
    if (g.needs_grad(xi)) g.grad_vector(xi) += g.grad_vector(self).cwiseProduct(mask);
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = table.graph();
  if (table.value().rank() != 2) throw InvalidInput("embedding: table must be 2-D");
  const Index vocab = table.shape()[0];
  const Index d = table.shape()[1];
  std::vector<int> idx(ids.begin(), ids.end());
  Tensor out({static_cast<Index>(idx.size()), d});
  const auto tm = table.value().matrix();
  auto om = out.matrix();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= vocab) {
      throw InvalidInput("embedding: id " + std::to_string(idx[i]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    om.row(static_cast<Index>(i)) = tm.row(idx[i]);
  }
  const std::size_t ti = table.id();
  return g.push("embedding", std::move(out), {ti}, [ti, idx = std::move(idx)](Graph& g, std::size_t self) {
    if (!g.needs_grad(ti)) return;
    const auto dy = g.grad_matrix(self);
    auto dt = g.grad_matrix(ti);
    for (std::size_t i = 0; i < idx.size(); ++i) dt.row(idx[i]) += dy.row(static_cast<Index>(i));
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Graph& g = logits.graph();
  if (logits.value().rank() != 2) throw InvalidInput("cross_entropy: logits must be [batch, classes]");
  auto ce = softmax_cross_entropy(logits.value().matrix(), labels);
  const double inv_batch = 1.0 / static_cast<double>(logits.shape()[0]);
  RowMat dz = std::move(ce.dloss_dlogits);
  const std::size_t li = logits.id();
  return g.push("cross_entropy", Tensor::scalar(ce.loss), {li},
                [li, dz = std::move(dz), inv_batch](Graph& g, std::size_t self) {
                  if (g.needs_grad(li)) g.grad_matrix(li) += (g.grad_vector(self)[0] * inv_batch) * dz;
                });
}

Var sum(Var x) {
  Graph& g = x.graph();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t xi = x.id();
  return g.push("sum", Tensor::scalar(s), {xi}, [xi](Graph& g, std::size_t self) {
    if (g.needs_grad(xi)) g.grad_vector(xi).array() += g.grad_vector(self)[0];
  });
}

Var mean(Var x) {
  const Index n = x.value().size();
  if (n == 0) throw InvalidInput("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_squares(Var x) {
  Graph& g = x.graph();
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  const std::size_t xi = x.id();
  return g.push("sum_squares", Tensor::scalar(s), {xi}, [xi](Graph& g, std::size_t self) {
    if (g.needs_grad(xi)) g.grad_vector(xi) += (2.0 * g.grad_vector(self)[0]) * g.value(xi).values();
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = x.graph();
  Tensor out = x.value();
  out.reshape(std::move(shape));
  const std::size_t xi = x.id();
  return g.push("reshape", std::move(out), {xi}, [xi](Graph& g, std::size_t self) {
    if (g.needs_grad(xi)) g.grad_vector(xi) += g.grad_vector(self);
  });
}

Var swap_axes_12(Var x) {
  Graph& g = x.graph();
  if (x.value().rank() != 4) throw InvalidInput("swap_axes_12: need rank 4, got " + shape_string(x.shape()));
  const Index a = x.shape()[0], b = x.shape()[1], c = x.shape()[2], d = x.shape()[3];
  Tensor out({a, c, b, d});
  const double* src = x.value().values().data();
  double* dst = out.values().data();
  for (Index i = 0; i < a; ++i)
    for (Index j = 0; j < b; ++j)
      for (Index k = 0; k < c; ++k)
        std::copy_n(src + ((i * b + j) * c + k) * d, d, dst + ((i * c + k) * b + j) * d);
  const std::size_t xi = x.id();
  return g.push("swap_axes_12", std::move(out), {xi}, [xi, a, b, c, d](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const double* dy = g.grad_vector(self).data();
    double* dx = g.grad_vector(xi).data();
    for (Index i = 0; i < a; ++i)
      for (Index j = 0; j < b; ++j)
        for (Index k = 0; k < c; ++k) {
          const double* from = dy + ((i * c + k) * b + j) * d;
          double* to = dx + ((i * b + j) * c + k) * d;
          for (Index e = 0; e < d; ++e) to[e] += from[e];
        }
  });
}

Var select_rows(Var x, std::vector<Index> rows) {
  Graph& g = x.graph();
  const auto xm = x.value().matrix();
  Tensor out({static_cast<Index>(rows.size()), xm.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= xm.rows()) throw InvalidInput("select_rows: row index out of range");
    out.matrix().row(static_cast<Index>(i)) = xm.row(rows[i]);
  }
  const std::size_t xi = x.id();
  return g.push("select_rows", std::move(out), {xi}, [xi, rows = std::move(rows)](Graph& g, std::size_t self) {
    if (!g.needs_grad(xi)) return;
    const auto dy = g.grad_matrix(self);
    auto dx = g.grad_matrix(xi);
    for (std::size_t i = 0; i < rows.size(); ++i) dx.row(rows[i]) += dy.row(static_cast<Index>(i));
  });
}

Var detach(Var x) {
  Graph& g = x.graph();
  return g.push("detach", x.value(), {}, nullptr);
}

}  // namespace inflect
