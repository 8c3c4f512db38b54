#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inflect/dataset.hpp"

namespace inflect {

/// token-motif: each class owns a motif of distinct tokens placed anywhere.
/// positional-motif: one shared motif whose segment of the sequence encodes
/// the class.
enum class PatternFamily { token_motif, positional_motif };
const char* to_string(PatternFamily f);
PatternFamily pattern_family_from_string(const std::string& s);

/// Synthetic source/target classification tasks over a shared vocabulary.
///
/// Token 0 is reserved for [CLS]. A sample of class y carries the motif of
/// class y with probability `label_correlation`, otherwise the motif of a
/// uniformly drawn class. Target samples replace each motif token, with
/// probability `substitution_rate`, by that position's target-only alternate.
struct TaskSpec {
  int vocab_size = 64;
  int seq_len = 15;
  int num_classes = 2;
  PatternFamily family = PatternFamily::positional_motif;
  int motif_len = 4;
  double substitution_rate = 0.5;
  double label_correlation = 1.0;
  Index source_train = 4096;
  Index source_val = 512;
  Index target_train = 4096;
  Index target_val = 512;
  std::uint64_t seed = 42;

  void validate() const;
};

struct TaskData {
  Dataset source_train, source_val, target_train, target_val;
  std::vector<std::vector<int>> source_motifs;  // per class (token-motif) or one shared motif
  std::vector<std::vector<int>> target_alternates;
  std::vector<int> background;
};

TaskData generate_task(const TaskSpec& spec);

/// Rule-based classifier that knows the source motifs: picks the class whose
/// motif (or motif segment) matches the most tokens. Serves as the oracle for
/// generator properties.
int reference_classify(std::span<const int> seq, const TaskSpec& spec, const TaskData& task);
double reference_accuracy(const Dataset& data, const TaskSpec& spec, const TaskData& task);

/// Largest deviation of any class frequency from 1 / num_classes.
double label_imbalance(const Dataset& data, int num_classes);

}  // namespace inflect
