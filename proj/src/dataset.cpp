#include "inflect/dataset.hpp"

#include "inflect/kernels.hpp"

namespace inflect {

TokenBatch Dataset::batch(std::span<const Index> rows) const {
  TokenBatch b;
  b.batch = static_cast<Index>(rows.size());
  b.seq = seq_len;
  b.ids.reserve(static_cast<std::size_t>(b.batch * seq_len));
  for (Index r : rows) {
    if (r < 0 || r >= size()) throw InvalidInput("dataset: row index out of range");
    auto seq = row(r);
    b.ids.insert(b.ids.end(), seq.begin(), seq.end());
  }
  return b;
}

TokenBatch Dataset::slice(Index begin, Index end) const {
  std::vector<Index> rows;
  for (Index i = begin; i < end; ++i) rows.push_back(i);
  return batch(rows);
}

std::vector<int> Dataset::labels_of(std::span<const Index> rows) const {
  std::vector<int> out;
  for (Index r : rows) out.push_back(labels.at(static_cast<std::size_t>(r)));
  return out;
}

Dataset Dataset::subset(Index begin, Index end) const {
  if (begin < 0 || end > size() || begin > end) throw InvalidInput("dataset: bad subset range");
  Dataset d;
  d.seq_len = seq_len;
  d.tokens.assign(tokens.begin() + begin * seq_len, tokens.begin() + end * seq_len);
  d.labels.assign(labels.begin() + begin, labels.begin() + end);
  return d;
}

void Dataset::push_back(std::span<const int> seq, int label) {
  if (static_cast<Index>(seq.size()) != seq_len) throw InvalidInput("dataset: sequence length mismatch");
  tokens.insert(tokens.end(), seq.begin(), seq.end());
  labels.push_back(label);
}

namespace {

struct TrainingFlagGuard {
  Model& model;
  bool saved;
  explicit TrainingFlagGuard(Model& m) : model(m), saved(m.training()) { model.train(false); }
  ~TrainingFlagGuard() { model.train(saved); }
};

}  // namespace

std::vector<Matrix> cls_representations(Model& model, const Dataset& data, Index batch_size) {
  TrainingFlagGuard guard(model);
  const int L = model.num_layers();
  std::vector<Matrix> reps(static_cast<std::size_t>(L), Matrix(data.size(), model.config().d_model));
  for (Index start = 0; start < data.size(); start += batch_size) {
    const Index end = std::min(data.size(), start + batch_size);
    Graph g;
    ForwardTrace t = model.forward(g, data.slice(start, end));
    for (int l = 0; l < L; ++l) reps[static_cast<std::size_t>(l)].middleRows(start, end - start) = t.cls[static_cast<std::size_t>(l)].value().matrix();
  }
  return reps;
}

EvalStats evaluate(Model& model, const Dataset& data, Index batch_size) {
  if (data.size() == 0) throw InvalidInput("evaluate: empty dataset");
  TrainingFlagGuard guard(model);
  EvalStats s;
  Index hits = 0;
  double conf = 0.0, loss = 0.0;
  for (Index start = 0; start < data.size(); start += batch_size) {
    const Index end = std::min(data.size(), start + batch_size);
    const RowMatrix<double> z = model.logits(data.slice(start, end));
    std::span<const int> labels(data.labels.data() + start, static_cast<std::size_t>(end - start));
    const auto ce = softmax_cross_entropy(z, labels);
    loss += ce.loss * static_cast<double>(end - start);
    for (Index r = 0; r < z.rows(); ++r) {
      Index arg = 0;
      for (Index c = 1; c < z.cols(); ++c) {
        if (z(r, c) > z(r, arg)) arg = c;
      }
      hits += arg == labels[static_cast<std::size_t>(r)];
      conf += ce.probabilities(r, arg);
    }
  }
  const double n = static_cast<double>(data.size());
  s.accuracy = static_cast<double>(hits) / n;
  s.mean_confidence = conf / n;
  s.mean_loss = loss / n;
  return s;
}

}  // namespace inflect
