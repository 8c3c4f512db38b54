#include "inflect/probes.hpp"

#include <cmath>
#include <ostream>
#include <set>

#include "inflect/autodiff.hpp"
#include "inflect/metrics_io.hpp"
#include "inflect/optim.hpp"
#include "inflect/rng.hpp"

namespace inflect {

const char* to_string(ProbeKind k) { return k == ProbeKind::linear ? "linear" : "mlp"; }

namespace {

RowMatrix<double> standardize(const Matrix& x, const Vector<double>& mean, const Vector<double>& inv_std) {
  RowMatrix<double> out = x;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() *= inv_std.transpose().array();
  return out;
}

void init_uniform(Param& p, double bound, Rng& rng) {
  for (Index i = 0; i < p.size(); ++i) p.value[i] = rng.uniform(-bound, bound);
}

}  // namespace

std::vector<int> Probe::predict(const Matrix& x) const {
  RowMatrix<double> z = standardize(x, mean, inv_std);
  RowMatrix<double> logits;
  if (kind == ProbeKind::linear) {
    logits = z * w1.transpose();
    logits.rowwise() += b1.transpose();
  } else {
    RowMatrix<double> hidden = z * w1.transpose();
    hidden.rowwise() += b1.transpose();
    hidden = hidden.cwiseMax(0.0);
    logits = hidden * w2.transpose();
    logits.rowwise() += b2.transpose();
  }
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index r = 0; r < logits.rows(); ++r) {
    Index arg = 0;
    for (Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, arg)) arg = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return out;
}

double Probe::accuracy(const Matrix& x, std::span<const int> y) const {
  if (static_cast<Index>(y.size()) != x.rows()) throw InvalidInput("probe accuracy: label count mismatch");
  if (y.empty()) throw InvalidInput("probe accuracy: empty evaluation set");
  const auto pred = predict(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

ProbeResult train_probe(const ProbeSplit& data, const ProbeConfig& config) {
  const Index n = data.train_x.rows();
  const Index d = data.train_x.cols();
  if (static_cast<Index>(data.train_y.size()) != n || static_cast<Index>(data.val_y.size()) != data.val_x.rows()) {
    throw InvalidInput("train_probe: label count does not match representations");
  }
  if (data.val_x.rows() == 0) throw InvalidInput("train_probe: empty validation split");
  if (data.val_x.cols() != d) throw InvalidInput("train_probe: train/val feature widths differ");
  std::set<int> classes;
  for (int y : data.train_y) {
    if (y < 0) throw InvalidInput("train_probe: negative label");
    classes.insert(y);
  }
  if (classes.size() < 2) throw InvalidInput("train_probe: need at least two classes in the training labels");
  if (config.epochs < 0 || config.batch_size < 1) throw InvalidInput("train_probe: bad epochs/batch_size");
  const Index num_classes = *classes.rbegin() + 1;

  Probe probe;
  probe.kind = config.kind;
  probe.mean = data.train_x.colwise().mean().transpose();
  probe.inv_std.resize(d);
  for (Index j = 0; j < d; ++j) {
    const double var = (data.train_x.col(j).array() - probe.mean[j]).square().mean();
    probe.inv_std[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
  }
  const RowMatrix<double> x = standardize(data.train_x, probe.mean, probe.inv_std);

  Rng rng(config.seed);
  Rng init = rng.stream("init");
  Rng order = rng.stream("order");
  Rng drop = rng.stream("dropout");
  const bool mlp = config.kind == ProbeKind::mlp;
  const Index width = mlp ? config.hidden_dim : num_classes;
  if (mlp && config.hidden_dim < 1) throw InvalidInput("train_probe: hidden_dim must be >= 1");
  Param w1{"probe.w1", Tensor({width, d})}, b1{"probe.b1", Tensor({width})};
  Param w2{"probe.w2", Tensor({num_classes, std::max<Index>(width, 1)})}, b2{"probe.b2", Tensor({num_classes})};
  init_uniform(w1, 1.0 / std::sqrt(static_cast<double>(d)), init);
  init_uniform(b1, 1.0 / std::sqrt(static_cast<double>(d)), init);
  std::vector<Param*> params{&w1, &b1};
  if (mlp) {
    init_uniform(w2, 1.0 / std::sqrt(static_cast<double>(width)), init);
    init_uniform(b2, 1.0 / std::sqrt(static_cast<double>(width)), init);
    params.push_back(&w2);
    params.push_back(&b2);
  }
  AdamW opt(params, {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});

  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order.shuffle(idx);
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index end = std::min(n, start + config.batch_size);
      Tensor xb({end - start, d});
      std::vector<int> yb;
      for (Index i = start; i < end; ++i) {
        xb.matrix().row(i - start) = x.row(idx[static_cast<std::size_t>(i)]);
        yb.push_back(data.train_y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
      }
      Graph g;
      Var in = g.constant(std::move(xb));
      Var logits;
      if (mlp) {
        Var hidden = relu(linear(in, g.param(w1), g.param(b1)));
        logits = linear(dropout(hidden, config.dropout, drop), g.param(w2), g.param(b2));
      } else {
        logits = linear(in, g.param(w1), g.param(b1));
      }
      Var loss = cross_entropy(logits, yb);
      opt.zero_grad();
      g.backward(loss);
      opt.step();
    }
  }

  probe.w1 = w1.value.matrix();
  probe.b1 = b1.value.values();
  if (mlp) {
    probe.w2 = w2.value.matrix();
    probe.b2 = b2.value.values();
  }
  ProbeResult result;
  result.probe = std::move(probe);
  result.train_accuracy = result.probe.accuracy(data.train_x, data.train_y);
  result.val_accuracy = result.probe.accuracy(data.val_x, data.val_y);
  return result;
}

ProbeReport probe_sweep(std::span<const Matrix> train_reps, std::span<const int> train_y,
                        std::span<const Matrix> val_reps, std::span<const int> val_y, ProbeConfig linear_config,
                        ProbeConfig mlp_config) {
  if (train_reps.size() != val_reps.size() || train_reps.empty()) {
    throw InvalidInput("probe_sweep: need the same non-zero number of train and val layers");
  }
  linear_config.kind = ProbeKind::linear;
  mlp_config.kind = ProbeKind::mlp;
  ProbeReport report;
  report.train_size = static_cast<Index>(train_y.size());
  report.val_size = static_cast<Index>(val_y.size());
  report.seed = linear_config.seed;
  for (std::size_t l = 0; l < train_reps.size(); ++l) {
    ProbeSplit split{train_reps[l], {train_y.begin(), train_y.end()}, val_reps[l], {val_y.begin(), val_y.end()}};
    report.linear_accuracy.push_back(train_probe(split, linear_config).val_accuracy);
    report.mlp_accuracy.push_back(train_probe(split, mlp_config).val_accuracy);
  }
  return report;
}

void write_probe_csv(std::ostream& out, const ProbeReport& report) {
  out << kProbeCsvHeader << '\n';
  for (std::size_t l = 0; l < report.linear_accuracy.size(); ++l) {
    out << l << ",linear," << format_double(report.linear_accuracy[l]) << ',' << report.seed << '\n';
    out << l << ",mlp," << format_double(report.mlp_accuracy[l]) << ',' << report.seed << '\n';
  }
}

}  // namespace inflect
