#include "inflect/task.hpp"

#include <algorithm>
#include <cmath>

#include "inflect/rng.hpp"

namespace inflect {

const char* to_string(PatternFamily f) {
  return f == PatternFamily::token_motif ? "token-motif" : "positional-motif";
}

PatternFamily pattern_family_from_string(const std::string& s) {
  if (s == "token-motif") return PatternFamily::token_motif;
  if (s == "positional-motif") return PatternFamily::positional_motif;
  throw InvalidInput("unknown pattern family '" + s + "'");
}

namespace {

int motif_sets(const TaskSpec& spec) {
  return spec.family == PatternFamily::token_motif ? spec.num_classes : 1;
}

Index segment_len(const TaskSpec& spec) { return spec.seq_len / spec.num_classes; }

}  // namespace

void TaskSpec::validate() const {
  if (num_classes < 2) throw InvalidInput("task: num_classes must be >= 2");
  if (seq_len < 1 || motif_len < 1) throw InvalidInput("task: seq_len and motif_len must be positive");
  if (motif_len > seq_len) throw InvalidInput("task: motif longer than sequence");
  if (family == PatternFamily::positional_motif && motif_len > seq_len / num_classes) {
    throw InvalidInput("task: positional motif does not fit in a class segment");
  }
  const int reserved = 1 + 2 * motif_sets(*this) * motif_len;
  if (vocab_size - reserved < 2) throw InvalidInput("task: vocabulary too small for motifs plus background");
  if (!(substitution_rate >= 0.0 && substitution_rate <= 1.0)) throw InvalidInput("task: substitution_rate outside [0, 1]");
  if (!(label_correlation >= 0.0 && label_correlation <= 1.0)) throw InvalidInput("task: label_correlation outside [0, 1]");
  for (Index n : {source_train, source_val, target_train, target_val}) {
    if (n < num_classes) throw InvalidInput("task: every split needs at least num_classes samples");
  }
}

namespace {

Dataset sample_split(const TaskSpec& spec, const TaskData& task, Index n, bool target, Rng rng) {
  Dataset d;
  d.seq_len = spec.seq_len;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % spec.num_classes);
  rng.shuffle(labels);

  std::vector<int> seq(static_cast<std::size_t>(spec.seq_len));
  const auto& bg = task.background;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    for (int& t : seq) t = bg[rng.below(bg.size())];
    int shown = y;
    if (!rng.bernoulli(spec.label_correlation)) shown = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes)));

    const int set = spec.family == PatternFamily::token_motif ? shown : 0;
    Index start;
    if (spec.family == PatternFamily::token_motif) {
      start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.seq_len - spec.motif_len + 1)));
    } else {
      const Index seg = segment_len(spec);
      start = shown * seg + static_cast<Index>(rng.below(static_cast<std::uint64_t>(seg - spec.motif_len + 1)));
    }
    for (int m = 0; m < spec.motif_len; ++m) {
      int tok = task.source_motifs[static_cast<std::size_t>(set)][static_cast<std::size_t>(m)];
      if (target && rng.bernoulli(spec.substitution_rate)) {
        tok = task.target_alternates[static_cast<std::size_t>(set)][static_cast<std::size_t>(m)];
      }
      seq[static_cast<std::size_t>(start + m)] = tok;
    }
    d.push_back(seq, y);
  }
  return d;
}

}  // namespace

TaskData generate_task(const TaskSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng vocab_rng = root.stream("data/vocab");
  std::vector<int> pool;
  for (int t = 1; t < spec.vocab_size; ++t) pool.push_back(t);
  vocab_rng.shuffle(pool);

  TaskData task;
  std::size_t next = 0;
  const int sets = motif_sets(spec);
  for (int c = 0; c < sets; ++c) {
    task.source_motifs.emplace_back(pool.begin() + static_cast<long>(next), pool.begin() + static_cast<long>(next + spec.motif_len));
    next += static_cast<std::size_t>(spec.motif_len);
  }
  for (int c = 0; c < sets; ++c) {
    task.target_alternates.emplace_back(pool.begin() + static_cast<long>(next), pool.begin() + static_cast<long>(next + spec.motif_len));
    next += static_cast<std::size_t>(spec.motif_len);
  }
  task.background.assign(pool.begin() + static_cast<long>(next), pool.end());
  std::sort(task.background.begin(), task.background.end());

  task.source_train = sample_split(spec, task, spec.source_train, false, root.stream("data/source_train"));
  task.source_val = sample_split(spec, task, spec.source_val, false, root.stream("data/source_val"));
  task.target_train = sample_split(spec, task, spec.target_train, true, root.stream("data/target_train"));
  task.target_val = sample_split(spec, task, spec.target_val, true, root.stream("data/target_val"));
  return task;
}

int reference_classify(std::span<const int> seq, const TaskSpec& spec, const TaskData& task) {
  const Index n = static_cast<Index>(seq.size());
  auto best_match = [&](const std::vector<int>& motif, Index from, Index to) {
    int best = 0;
    for (Index s = from; s + spec.motif_len <= to; ++s) {
      int hits = 0;
      for (int m = 0; m < spec.motif_len; ++m) hits += seq[static_cast<std::size_t>(s + m)] == motif[static_cast<std::size_t>(m)];
      best = std::max(best, hits);
    }
    return best;
  };
  int arg = 0, best = -1;
  for (int c = 0; c < spec.num_classes; ++c) {
    int score;
    if (spec.family == PatternFamily::token_motif) {
      score = best_match(task.source_motifs[static_cast<std::size_t>(c)], 0, n);
    } else {
      const Index seg = segment_len(spec);
      score = best_match(task.source_motifs[0], c * seg, (c + 1) * seg);
    }
    if (score > best) {
      best = score;
      arg = c;
    }
  }
  return arg;
}

double reference_accuracy(const Dataset& data, const TaskSpec& spec, const TaskData& task) {
  if (data.size() == 0) throw InvalidInput("reference_accuracy: empty dataset");
  Index hits = 0;
  for (Index i = 0; i < data.size(); ++i) hits += reference_classify(data.row(i), spec, task) == data.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double label_imbalance(const Dataset& data, int num_classes) {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : data.labels) ++counts.at(static_cast<std::size_t>(y));
  double worst = 0.0;
  for (Index c : counts) {
    worst = std::max(worst, std::abs(static_cast<double>(c) / static_cast<double>(data.size()) - 1.0 / num_classes));
  }
  return worst;
}

}  // namespace inflect
