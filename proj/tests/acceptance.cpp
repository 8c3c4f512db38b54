// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance [N ...]
//
// With no arguments every criterion runs. Criteria 6-10 share one run of the
// default-config pipeline through the CLI (about 15 minutes on one core).
// Setting INFLECT_ACCEPTANCE_PIPELINE_DIR reuses an existing `inflect run`
// output; its runtime is then unknown and criterion 6 reports that.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "inflect/autodiff.hpp"
#include "inflect/config.hpp"
#include "inflect/dataset.hpp"
#include "inflect/diagnostics.hpp"
#include "inflect/gradcheck.hpp"
#include "inflect/kernels.hpp"
#include "inflect/lora.hpp"
#include "inflect/metrics_io.hpp"
#include "inflect/optim.hpp"
#include "inflect/probes.hpp"
#include "inflect/report.hpp"
#include "inflect/representation.hpp"
#include "inflect/ski.hpp"

namespace fs = std::filesystem;
using namespace inflect;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kCli = INFLECT_CLI;
const fs::path kWorkDir = INFLECT_ACCEPTANCE_DIR;
const std::vector<std::uint64_t> kSeeds{42, 43, 44};
const Strategy kStrategies[] = {Strategy::shallow_top_k, Strategy::full, Strategy::selective_lora,
                                Strategy::lora_everywhere};

// Collects failed conditions and informational notes for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  bool soft = false;  // reported as FAIL but does not change the exit code

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
  bool passed() const { return failures.empty(); }
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = kCli + " " + args + " 2>> " + (kWorkDir / "cli_stderr.log").string();
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  std::string captured;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) captured.append(buf, n);
  const int status = pclose(pipe);
  if (out) *out = captured;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> files_under(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

Matrix random_matrix(Index n, Index d, Rng& rng) {
  Matrix m(n, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < n; ++i) m(i, j) = rng.normal();
  }
  return m;
}

TokenBatch random_batch(Index batch, Index seq, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  TokenBatch b{batch, seq, {}};
  for (Index i = 0; i < batch * seq; ++i) b.ids.push_back(1 + static_cast<int>(rng.below(vocab - 1)));
  return b;
}

// ---------------------------------------------------------------------------
// 1. Gradient oracle

struct OpCase {
  const char* name;
  std::function<Var(Var, Rng&)> op;
};

void criterion_gradients(Check& c) {
  const auto t0 = Clock::now();
  const std::vector<OpCase> cases{
      {"sigmoid", [](Var x, Rng&) { return sigmoid(x); }},
      {"tanh", [](Var x, Rng&) { return tanh(x); }},
      {"gelu", [](Var x, Rng&) { return gelu(x); }},
      {"softmax", [](Var x, Rng&) { return softmax(x); }},
      {"scale", [](Var x, Rng&) { return scale(x, -1.7); }},
      {"mul", [](Var x, Rng&) { return mul(x, x); }},
      {"add", [](Var x, Rng&) { return add(x, scale(x, 0.3)); }},
      {"sum_squares", [](Var x, Rng&) { return sum_squares(x); }},
      {"mean", [](Var x, Rng&) { return mean(x); }},
      {"reshape", [](Var x, Rng&) { return reshape(x, {x.value().size()}); }},
      {"select_rows", [](Var x, Rng&) { return select_rows(x, {0, 0, x.value().rows() - 1}); }},
      {"layer_norm",
       [](Var x, Rng& r) {
         Graph& g = x.graph();
         const Index d = x.value().cols();
         return layer_norm(x, g.constant(random_tensor({d}, r)), g.constant(random_tensor({d}, r)));
       }},
      {"linear",
       [](Var x, Rng& r) {
         Graph& g = x.graph();
         return linear(x, g.constant(random_tensor({3, x.value().cols()}, r)), g.constant(random_tensor({3}, r)));
       }},
      {"matmul",
       [](Var x, Rng& r) { return matmul(x, x.graph().constant(random_tensor({x.value().cols(), 2}, r))); }},
      {"batched_matmul", [](Var x, Rng&) { return batched_matmul(x, x, true); }},
      // Inputs are pushed away from the kink below.
      {"relu", [](Var x, Rng&) { return relu(x); }},
  };
  double worst = 0.0;
  std::string worst_name;
  int count = 0;
  for (const OpCase& op : cases) {
    for (std::uint64_t s = 0; s < 8; ++s) {
      const Index rows = 2 + static_cast<Index>(s % 3), cols = 2 + static_cast<Index>(s % 4);
      Rng rng(1000 * s + 17);
      Tensor base = random_tensor({rows, cols}, rng);
      if (std::string(op.name) == "relu") {
        for (Index i = 0; i < base.size(); ++i) base[i] += base[i] >= 0 ? 0.1 : -0.1;
      }
      Param x{"x", base, true};
      Tensor w;
      {
        Graph g;
        Rng probe(1000 * s + 18);
        w = random_tensor(op.op(g.param(x), probe).shape(), rng);
      }
      Param* params[] = {&x};
      const double err =
          finite_diff_check(
              [&](Graph& g) {
                Rng local(1000 * s + 18);
                return sum(mul(op.op(g.param(x), local), g.constant(w)));
              },
              params)
              .max_relative_error;
      if (err > worst) worst = err, worst_name = op.name;
      ++count;
    }
  }
  // Rank-4 attention ops, embedding and cross-entropy.
  for (std::uint64_t s = 0; s < 4; ++s) {
    Rng rng(500 + s);
    Param a{"a", random_tensor({2, 3, 4, 5}, rng), true};
    Param b{"b", random_tensor({2, 3, 5, 4}, rng), true};
    Tensor w1 = random_tensor({2, 4, 3, 5}, rng), w2 = random_tensor({2, 3, 4, 4}, rng);
    Param* ab[] = {&a, &b};
    const double e1 =
        finite_diff_check([&](Graph& g) { return sum(mul(swap_axes_12(g.param(a)), g.constant(w1))); }, ab)
            .max_relative_error;
    const double e2 = finite_diff_check(
                          [&](Graph& g) {
                            return sum(mul(batched_matmul(g.param(a), g.param(b)), g.constant(w2)));
                          },
                          ab)
                          .max_relative_error;
    Param table{"table", random_tensor({6, 3}, rng), true};
    Param head{"head", random_tensor({4, 3}, rng), true};
    std::vector<int> ids, labels;
    for (int i = 0; i < 5; ++i) {
      ids.push_back(static_cast<int>(rng.below(6)));
      labels.push_back(static_cast<int>(rng.below(4)));
    }
    Param* th[] = {&table, &head};
    const double e3 = finite_diff_check(
                          [&](Graph& g) {
                            return cross_entropy(linear(embedding(g.param(table), ids), g.param(head)), labels);
                          },
                          th)
                          .max_relative_error;
    for (auto [e, n] : {std::pair{e1, "swap_axes_12"}, {e2, "batched_matmul-4d"}, {e3, "embedding+cross_entropy"}}) {
      if (e > worst) worst = e, worst_name = n;
      ++count;
    }
  }
  // Full mini-transformer. Key biases are left out: softmax is invariant to a
  // per-row shift, so their gradient is identically zero.
  Index transformer_entries = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    ModelConfig mc;
    mc.num_layers = 2;
    mc.num_heads = 2;
    mc.d_model = 8;
    mc.d_ff = 16;
    mc.vocab_size = 12;
    mc.max_seq_len = 8;
    mc.num_classes = 3;
    mc.dropout = 0.0;
    Model m(mc, 10 + s);
    Rng rng(20 + s);
    for (Param* p : m.parameters()) {
      if (p->name.find("ln") == std::string::npos) {
        for (Index i = 0; i < p->size(); ++i) p->value[i] = 0.3 * rng.normal();
      }
    }
    m.set_strategy(Freezing::full);
    const TokenBatch batch = random_batch(2, 4, 12, 30 + s);
    const std::vector<int> labels{static_cast<int>(s % 3), static_cast<int>((s + 1) % 3)};
    std::vector<Param*> params;
    for (Param* p : m.parameters()) {
      if (p->name.find(".bk") == std::string::npos) params.push_back(p);
    }
    GradCheckResult r = finite_diff_check(
        [&](Graph& g) { return cross_entropy(m.forward(g, batch).logits, labels); }, params, 1e-5, 12);
    transformer_entries += r.entries_checked;
    if (r.max_relative_error > worst) worst = r.max_relative_error, worst_name = "transformer:" + r.worst_param;
    ++count;
  }
  const double elapsed = seconds_since(t0);
  c.expect(worst < 1e-5, "max relative error " + fmt(worst) + " (" + worst_name + ") >= 1e-5");
  c.expect(count >= 100, "only " + std::to_string(count) + " randomized cases");
  c.expect(elapsed < 60.0, "runtime " + fmt(elapsed, 3) + " s >= 60 s");
  c.note(std::to_string(count) + " cases, " + std::to_string(transformer_entries) +
         " transformer entries, max rel err " + fmt(worst, 3) + ", " + fmt(elapsed, 3) + " s");
}

// ---------------------------------------------------------------------------
// 2. Softmax cross-entropy gradient

void criterion_cross_entropy(Check& c) {
  Rng rng(2024);
  int exact = 0;
  double max_dev = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index b = 1 + static_cast<Index>(rng.below(8)), k = 2 + static_cast<Index>(rng.below(6));
    RowMatrix<double> z(b, k);
    for (Index i = 0; i < z.size(); ++i) z.data()[i] = 5.0 * rng.normal();
    std::vector<int> y(static_cast<std::size_t>(b));
    for (int& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    const auto r = softmax_cross_entropy(z, y);
    RowMatrix<double> expected = softmax_rows(z);
    for (Index i = 0; i < b; ++i) expected(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    max_dev = std::max(max_dev, (r.dloss_dlogits - expected).cwiseAbs().maxCoeff());
    exact += r.dloss_dlogits == expected;
  }
  c.expect(max_dev <= std::numeric_limits<double>::epsilon(), "max |dL/dz - (p - y)| = " + fmt(max_dev));
  RowMatrix<double> z(1, 2);
  z << 10.0, 0.0;
  const int wrong[] = {1};
  const auto r = softmax_cross_entropy(z, wrong);
  const double g0 = std::abs(r.dloss_dlogits(0, 0)), g1 = std::abs(r.dloss_dlogits(0, 1));
  c.expect(std::abs(g0 - 1.0) < 1e-4 && std::abs(g1 - 1.0) < 1e-4,
           "z=[10,0] wrong label gives |dL/dz| = [" + fmt(g0, 8) + ", " + fmt(g1, 8) + "]");
  c.note(std::to_string(exact) + "/1000 bitwise equal to p - y, z=[10,0] gives [" + fmt(g0, 8) + ", " +
         fmt(g1, 8) + "]");
}

// ---------------------------------------------------------------------------
// 3. Metric unit tests, with ΔCKA of a frozen-everything run on a real checkpoint

void criterion_metrics(Check& c, const fs::path& pipeline) {
  double worst_uniform = 0.0;
  for (Index s = 1; s <= 40; ++s) {
    Tensor t({1, 1, 3, s});
    for (Index i = 0; i < t.size(); ++i) t[i] = 1.0 / static_cast<double>(s);
    worst_uniform = std::max(worst_uniform, std::abs(attention_entropy(t) - std::log(static_cast<double>(s))));
  }
  c.expect(worst_uniform <= 1e-12, "uniform rows deviate from ln S by " + fmt(worst_uniform));
  Tensor one_hot({1, 2, 4, 4});
  for (Index r = 0; r < 8; ++r) one_hot[r * 4 + (r % 4)] = 1.0;
  c.expect(attention_entropy(one_hot) == 0.0, "one-hot entropy " + fmt(attention_entropy(one_hot)));

  Rng rng(3);
  double cka_dev = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_matrix(80, 8, rng), y = random_matrix(80, 5, rng);
    c.expect(linear_cka(x, x) == 1.0, "CKA(X, X) = " + fmt(linear_cka(x, x), 17));
    Eigen::HouseholderQR<Matrix> qr(random_matrix(8, 8, rng));
    const Matrix q = qr.householderQ();
    const double base = linear_cka(x, y);
    cka_dev = std::max({cka_dev, std::abs(linear_cka(x * q, y) - base), std::abs(linear_cka(3.7 * x, y) - base),
                        std::abs(linear_cka(x, x * q) - 1.0)});
  }
  c.expect(cka_dev < 1e-9, "CKA invariance deviation " + fmt(cka_dev));

  const ExperimentConfig config{};
  const TaskData task = generate_task(config.task);
  const Model checkpoint = load_checkpoint((pipeline / "checkpoints" / "OVER_seed42.ckpt").string());
  StrategySpec frozen = default_strategy(Strategy::shallow_top_k);
  frozen.k = 0;
  frozen.train_head = false;
  frozen.steps = 20;
  const RunReport r = finetune(checkpoint, task, Regime::over, frozen, 42, config.locator, config.measure);
  c.expect(r.completed(), "frozen-everything run failed: " + r.error);
  c.expect(r.trainable_params == 0, "frozen-everything run has trainable parameters");
  double max_delta = 0.0;
  for (double d : r.delta_cka) max_delta = std::max(max_delta, std::abs(d));
  c.expect(r.delta_cka.size() == static_cast<std::size_t>(config.model.num_layers) && max_delta == 0.0,
           "frozen-everything ΔCKA max " + fmt(max_delta));
  c.note("ln S error " + fmt(worst_uniform, 3) + ", CKA invariance " + fmt(cka_dev, 3) +
         ", frozen ΔCKA max " + fmt(max_delta) + " over " + std::to_string(r.delta_cka.size()) + " layers");
}

// ---------------------------------------------------------------------------
// 4. Locator

void criterion_locator(Check& c) {
  const std::vector<double> h{2.0, 1.9, 1.8, 1.6, 1.2, 0.4, 1.1, 1.5, 1.7, 1.8, 1.9, 2.0};
  const std::vector<double> g{0.1, 0.5, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.98, 1.0};
  const SkiResult r = locate_band_greedy(h, g, 0.25, 1);
  c.expect(r.entropy_min_layer == 5, "entropy argmin " + std::to_string(r.entropy_min_layer));
  c.expect(r.grad_threshold_layer == 0, "gradient threshold layer is not 0");
  c.expect(r.band == std::vector<int>{0, 1, 4, 5, 6}, "band " + band_string(r.band));

  const std::vector<double> ht = normalize_profile(h), gt = normalize_profile(g);
  c.expect(ski_scores(ht, gt, 1.0) == ht, "alpha = 1 is not the entropy term");
  c.expect(ski_scores(ht, gt, 0.0) == gt, "alpha = 0 is not the gradient term");

  const double bottom[] = {1.0, 0.5, 0.2, 0.1, 0.0};
  const double top[] = {0.0, 0.1, 0.2, 0.5, 1.0};
  const SkiResult lo = locate_band_maxima(bottom, 1), hi = locate_band_maxima(top, 1);
  c.expect(lo.band == std::vector<int>{0, 1}, "peak at layer 0 gives " + band_string(lo.band));
  c.expect(hi.band == std::vector<int>{3, 4}, "peak at layer L-1 gives " + band_string(hi.band));
  const double gh[] = {2.0, 1.5, 1.0, 0.5}, gg[] = {1.0, 0.9, 0.8, 0.1};
  const SkiResult gtop = locate_band_greedy(gh, gg, 0.25, 1);
  c.expect(gtop.band == std::vector<int>{2, 3}, "greedy at layer L-1 gives " + band_string(gtop.band));
  c.note("band " + band_string(r.band) + ", clipped bands " + band_string(lo.band) + " and " +
         band_string(hi.band));
}

// ---------------------------------------------------------------------------
// 5. LoRA contracts at the default model size

void criterion_lora(Check& c) {
  ModelConfig mc;
  mc.dropout = 0.0;
  const int vocab = mc.vocab_size;
  LoraSpec spec;
  spec.layers = {0, 1, 4, 5};

  Model m(mc, 7);
  const TokenBatch probe_inputs = random_batch(256, 15, vocab, 8);
  const RowMatrix<double> before = m.logits(probe_inputs);
  mount_lora(m, spec, 9);
  c.expect(m.logits(probe_inputs) == before, "logits changed on mount");

  const Index head = static_cast<Index>(mc.num_classes) * mc.d_model + mc.num_classes;
  const Index formula = static_cast<Index>(spec.layers.size()) * 3 * 2 * spec.rank * mc.d_model + head;
  Index enumerated = 0;
  for (Param* p : m.parameters()) {
    if (p->trainable) enumerated += p->size();
  }
  c.expect(enumerated == formula && m.count_trainable() == formula,
           "trainable " + std::to_string(enumerated) + " vs formula " + std::to_string(formula));

  {
    for (LoraAdapter& ad : m.adapters()) ad.b.value.values().setConstant(0.05);
    Graph g;
    ForwardTrace t = m.forward(g, random_batch(8, 15, vocab, 10), {.tap_blocks = true});
    std::vector<int> y(8);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    g.backward(cross_entropy(t.logits, y));
    bool any_backbone_grad = false;
    for (int l = 0; l < m.num_layers(); ++l) {
      for (Param* p : m.layer(l).all()) {
        if (p->value.has_grad() && p->value.grad().cwiseAbs().maxCoeff() != 0.0) any_backbone_grad = true;
      }
    }
    for (Param* p : m.embedding_parameters()) {
      if (p->value.has_grad() && p->value.grad().cwiseAbs().maxCoeff() != 0.0) any_backbone_grad = true;
    }
    c.expect(!any_backbone_grad, "frozen backbone parameter received a nonzero gradient");
    for (LoraAdapter& ad : m.adapters()) ad.b.value.values().setZero();
  }

  AdamW opt(m.parameters(), {.lr = 1e-2});
  Rng data(11), drop(12);
  m.train(true);
  for (int step = 0; step < 50; ++step) {
    TokenBatch b = random_batch(16, 15, vocab, data.next_u64());
    std::vector<int> y(16);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = b.ids[i * 15] % 2;
    Graph g;
    ForwardTrace t = m.forward(g, b, {.dropout_rng = &drop});
    opt.zero_grad();
    g.backward(cross_entropy(t.logits, y));
    opt.step();
  }
  m.train(false);
  const RowMatrix<double> unmerged = m.logits(probe_inputs);
  merge_lora(m);
  const double diff = (unmerged - m.logits(probe_inputs)).cwiseAbs().maxCoeff();
  c.expect(diff < 1e-9, "merge changes logits by " + fmt(diff));
  c.note("trainable " + std::to_string(formula) + ", merge max |Δlogit| " + fmt(diff, 3) + " over 256 inputs");
}

// ---------------------------------------------------------------------------
// Pipeline artifacts shared by criteria 6-10

struct Pipeline {
  fs::path dir;
  std::optional<double> seconds;  // empty when reused
  bool ok = false;
  std::string error;
};

Pipeline& pipeline() {
  static Pipeline p = [] {
    Pipeline out;
    if (const char* reuse = std::getenv("INFLECT_ACCEPTANCE_PIPELINE_DIR")) {
      out.dir = reuse;
      out.ok = fs::exists(out.dir / "aggregate.json");
      if (!out.ok) out.error = "no aggregate.json under " + out.dir.string();
      return out;
    }
    out.dir = kWorkDir / "pipeline";
    fs::remove_all(out.dir);
    std::cout << "running the default pipeline into " << out.dir << " ..." << std::endl;
    const auto t0 = Clock::now();
    const int code = run_cli("run --out-dir " + out.dir.string());
    out.seconds = seconds_since(t0);
    out.ok = code == 0;
    if (!out.ok) out.error = "inflect run exited with " + std::to_string(code);
    return out;
  }();
  return p;
}

fs::path run_dir(const fs::path& root, Regime r, Strategy s, std::uint64_t seed) {
  return root / "runs" / run_id(r, to_string(s), seed);
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p.string())); }

std::vector<double> json_vector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

// ---------------------------------------------------------------------------
// 6. Saturation and suppression

void criterion_saturation(Check& c, const Pipeline& p) {
  int a = 0, b = 0, g = 0;
  for (std::uint64_t seed : kSeeds) {
    const auto under = read_json(p.dir / "checkpoints" / ("UNDER_seed" + std::to_string(seed) + ".json"));
    const auto over = read_json(p.dir / "checkpoints" / ("OVER_seed" + std::to_string(seed) + ".json"));
    const double cu = under["source_val"]["mean_confidence"], co = over["source_val"]["mean_confidence"];
    // The calibration profile is measured on target batches before fine-tuning.
    const auto lu = read_json(run_dir(p.dir, Regime::under, Strategy::selective_lora, seed) / "locator.json");
    const auto lo = read_json(run_dir(p.dir, Regime::over, Strategy::selective_lora, seed) / "locator.json");
    const std::vector<double> hu = json_vector(lu["H"]), ho = json_vector(lo["H"]);
    const std::vector<double> gu = json_vector(lu["G"]), go = json_vector(lo["G"]);
    const double min_hu = *std::min_element(hu.begin(), hu.end()), min_ho = *std::min_element(ho.begin(), ho.end());
    const double mean_gu = mean_of(gu), mean_go = mean_of(go);
    a += co > cu;
    b += min_ho < min_hu;
    g += mean_go < mean_gu;
    c.note("seed " + std::to_string(seed) + ": confidence " + fmt(cu, 5) + " -> " + fmt(co, 5) + ", min entropy " +
           fmt(min_hu, 8) + " -> " + fmt(min_ho, 8) + ", mean act-grad " + fmt(mean_gu, 5) + " -> " +
           fmt(mean_go, 5) + " (UNDER -> OVER)");
  }
  c.expect(a >= 2, "(a) OVER more confident in " + std::to_string(a) + "/3 seeds");
  c.expect(b >= 2, "(b) OVER lower minimum entropy in " + std::to_string(b) + "/3 seeds");
  c.expect(g >= 2, "(c) OVER smaller activation gradients in " + std::to_string(g) + "/3 seeds");
  if (p.seconds) {
    c.expect(*p.seconds < 900.0, "pipeline took " + fmt(*p.seconds, 4) + " s >= 900 s");
    c.note("pipeline runtime " + fmt(*p.seconds, 4) + " s");
  } else {
    c.expect(false, "pipeline runtime not measured (reused " + p.dir.string() + ")");
  }
  c.note("(a) " + std::to_string(a) + "/3, (b) " + std::to_string(b) + "/3, (c) " + std::to_string(g) + "/3");
}

// ---------------------------------------------------------------------------
// 7. Strategy contracts

void criterion_strategies(Check& c, const Pipeline& p) {
  const ExperimentConfig config{};
  const int L = config.model.num_layers;
  int shallow_runs = 0;
  for (Regime regime : {Regime::under, Regime::over}) {
    for (std::uint64_t seed : kSeeds) {
      const std::string id = run_id(regime, "shallow-top-k", seed);
      std::ifstream in(run_dir(p.dir, regime, Strategy::shallow_top_k, seed) / "metrics.csv");
      const std::vector<MetricRow> rows = read_metrics_csv(in);
      for (const MetricRow& r : rows) {
        if (r.layer > L - 3) continue;
        if (r.metric == "param_grad_norm") c.expect(r.value == 0.0, id + " layer " + std::to_string(r.layer) +
                                                                        " param-grad " + fmt(r.value));
        if (r.metric == "activation_grad_norm") c.expect(r.value > 0.0, id + " layer " + std::to_string(r.layer) +
                                                                             " act-grad " + fmt(r.value));
      }
      c.expect(!rows.empty(), id + " has no metrics");
      ++shallow_runs;

      std::map<Strategy, Index> count;
      for (Strategy s : kStrategies) {
        count[s] = read_run_report((run_dir(p.dir, regime, s, seed) / "report.json").string()).trainable_params;
      }
      const bool ordered = count[Strategy::selective_lora] < count[Strategy::lora_everywhere] &&
                           count[Strategy::lora_everywhere] < count[Strategy::shallow_top_k] &&
                           count[Strategy::shallow_top_k] < count[Strategy::full];
      c.expect(ordered, std::string(to_string(regime)) + " seed " + std::to_string(seed) + " counts " +
                            std::to_string(count[Strategy::selective_lora]) + " / " +
                            std::to_string(count[Strategy::lora_everywhere]) + " / " +
                            std::to_string(count[Strategy::shallow_top_k]) + " / " +
                            std::to_string(count[Strategy::full]));
      if (regime == Regime::over && seed == 42) {
        c.note("OVER seed 42 trainable: selective " + std::to_string(count[Strategy::selective_lora]) +
               " < everywhere " + std::to_string(count[Strategy::lora_everywhere]) + " < shallow " +
               std::to_string(count[Strategy::shallow_top_k]) + " < full " + std::to_string(count[Strategy::full]));
      }
    }
  }
  c.note(std::to_string(shallow_runs) + " shallow-top-2 runs: layers 0.." + std::to_string(L - 3) +
         " param-grad 0 with act-grad > 0 at every step");
}

// ---------------------------------------------------------------------------
// 8. Band consistency (soft) and per-seed determinism (hard)

bool criterion_bands(Check& c, const Pipeline& p) {
  bool deterministic = true;
  bool consistent = true;
  for (Regime regime : {Regime::under, Regime::over}) {
    std::set<std::vector<int>> bands;
    std::string listing;
    for (std::uint64_t seed : kSeeds) {
      std::optional<std::string> first;
      for (Strategy s : kStrategies) {
        const std::string loc = read_text_file((run_dir(p.dir, regime, s, seed) / "locator.json").string());
        if (!first) first = loc;
        if (loc != *first) {
          deterministic = false;
          c.expect(false, run_id(regime, to_string(s), seed) + " locator differs from the other strategies");
        }
      }
      const std::vector<int> band = parse_locator_report(*first).band;
      bands.insert(band);
      listing += (listing.empty() ? "" : " ") + std::to_string(seed) + ":" + band_string(band);
    }
    c.note(std::string(to_string(regime)) + " bands " + listing);
    if (bands.size() != 1) consistent = false;
  }

  // Rerun the calibration for one seed from scratch through the CLI.
  const fs::path rerun = kWorkDir / "rerun-seed42";
  fs::remove_all(rerun);
  const bool ran = run_cli("pretrain --seed 42 --out-dir " + rerun.string()) == 0 &&
                   run_cli("finetune --seed 42 --regime OVER --strategy selective-lora --out-dir " + rerun.string()) ==
                       0;
  c.expect(ran, "seed 42 rerun failed");
  if (ran) {
    const fs::path rel = fs::path("runs") / run_id(Regime::over, "selective-lora", 42) / "locator.json";
    const bool same = read_text_file((rerun / rel).string()) == read_text_file((p.dir / rel).string());
    deterministic &= same;
    c.expect(same, "seed 42 rerun produced a different locator record");
  }
  if (deterministic && !consistent) {
    c.soft = true;
    c.failures.push_back("bands differ across seeds (logged finding; per-seed determinism holds)");
  }
  return deterministic;
}

// ---------------------------------------------------------------------------
// 9. Probes

ProbeSplit xor_clusters(std::uint64_t seed) {
  Rng rng(seed);
  const double cx[] = {-2.0, 2.0, -2.0, 2.0}, cy[] = {-2.0, 2.0, 2.0, -2.0};
  const int label[] = {0, 0, 1, 1};
  ProbeSplit s;
  auto fill = [&](Matrix& x, std::vector<int>& y, Index n) {
    x.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(rng.below(4));
      x(i, 0) = cx[k] + 0.4 * rng.normal();
      x(i, 1) = cy[k] + 0.4 * rng.normal();
      y.push_back(label[k]);
    }
  };
  fill(s.train_x, s.train_y, 1000);
  fill(s.val_x, s.val_y, 500);
  return s;
}

void criterion_probes(Check& c, const Pipeline& p) {
  const ExperimentConfig config{};
  const TaskData task = generate_task(config.task);
  Model model = load_checkpoint((p.dir / "checkpoints" / "OVER_seed42.ckpt").string());
  const Dataset train = task.target_train.subset(0, config.measure.probe_train);
  const Dataset val = task.target_val.subset(0, config.measure.probe_val);
  const std::vector<Matrix> train_reps = cls_representations(model, train);
  const std::vector<Matrix> val_reps = cls_representations(model, val);
  std::vector<int> train_y = train.labels, val_y = val.labels;
  Rng perm(77);
  perm.shuffle(train_y);
  perm.shuffle(val_y);
  const double chance = 1.0 / config.task.num_classes;
  const double sigma = std::sqrt(chance * (1.0 - chance) / static_cast<double>(val.size()));
  std::string permuted;
  for (std::size_t l = 0; l < train_reps.size(); ++l) {
    const ProbeResult r = train_probe({train_reps[l], train_y, val_reps[l], val_y}, config.measure.linear_probe);
    c.expect(std::abs(r.val_accuracy - chance) <= 3.0 * sigma,
             "permuted labels, layer " + std::to_string(l) + ": " + fmt(r.val_accuracy, 4));
    permuted += (permuted.empty() ? "" : " ") + fmt(r.val_accuracy, 3);
  }
  c.note("permuted-label accuracy per layer " + permuted + " (chance " + fmt(chance) + ", 3σ " + fmt(3 * sigma, 3) +
         ")");

  const ProbeSplit x = xor_clusters(4);
  ProbeConfig mlp;
  mlp.kind = ProbeKind::mlp;
  mlp.epochs = 60;
  mlp.learning_rate = 1e-2;
  const double lin_acc = train_probe(x, {}).val_accuracy, mlp_acc = train_probe(x, mlp).val_accuracy;
  c.expect(lin_acc < 0.6, "XOR linear probe " + fmt(lin_acc));
  c.expect(mlp_acc > 0.9, "XOR MLP probe " + fmt(mlp_acc));
  c.note("XOR linear " + fmt(lin_acc, 3) + ", MLP " + fmt(mlp_acc, 3));

  const std::size_t L = static_cast<std::size_t>(config.model.num_layers);
  int curves = 0;
  for (Regime regime : {Regime::under, Regime::over}) {
    for (Strategy s : kStrategies) {
      for (std::uint64_t seed : kSeeds) {
        const RunReport r = read_run_report((run_dir(p.dir, regime, s, seed) / "report.json").string());
        const bool ok = r.probes.linear_accuracy.size() == L && r.probes.mlp_accuracy.size() == L &&
                        fs::file_size(run_dir(p.dir, regime, s, seed) / "probes.csv") > 0;
        c.expect(ok, run_id(regime, to_string(s), seed) + " lacks a per-layer probe curve");
        curves += ok;
      }
    }
  }
  const std::string svg = read_text_file((p.dir / "plots" / "probe-accuracy-by-layer.svg").string());
  for (Regime regime : {Regime::under, Regime::over}) {
    for (Strategy s : kStrategies) {
      const std::string label = std::string(to_string(regime)) + " " + to_string(s);
      c.expect(svg.find("data-label=\"" + label + "\"") != std::string::npos, "probe plot lacks " + label);
    }
  }
  c.note(std::to_string(curves) + " per-layer probe curves, 8 series in the probe plot");
}

// ---------------------------------------------------------------------------
// 10. Reproducibility

void criterion_reproducibility(Check& c, const Pipeline& p) {
  // Default config, one seed, run stepwise: compared against the full pipeline.
  const fs::path rerun = kWorkDir / "rerun-seed42";
  if (!fs::exists(rerun / "runs")) {
    run_cli("pretrain --seed 42 --out-dir " + rerun.string());
    run_cli("finetune --seed 42 --regime OVER --strategy selective-lora --out-dir " + rerun.string());
  }
  int compared = 0;
  for (const fs::path& rel : {fs::path("checkpoints/OVER_seed42.ckpt"), fs::path("checkpoints/UNDER_seed42.ckpt"),
                             fs::path("runs/OVER_selective-lora_seed42/report.json"),
                             fs::path("runs/OVER_selective-lora_seed42/metrics.csv"),
                             fs::path("runs/OVER_selective-lora_seed42/probes.csv"),
                             fs::path("runs/OVER_selective-lora_seed42/locator.json")}) {
    const bool same = fs::exists(rerun / rel) && read_text_file((rerun / rel).string()) ==
                                                     read_text_file((p.dir / rel).string());
    c.expect(same, "default config: " + rel.string() + " differs on rerun");
    ++compared;
  }
  // Plots regenerated from the pipeline's aggregate.
  const fs::path replot = kWorkDir / "replot";
  fs::remove_all(replot);
  c.expect(run_cli("plot --aggregate " + (p.dir / "aggregate.json").string() + " --out-dir " + replot.string()) == 0,
           "plot rerun failed");
  for (const auto& e : fs::directory_iterator(p.dir / "plots")) {
    const fs::path again = replot / "plots" / e.path().filename();
    const bool same = fs::exists(again) && read_text_file(again.string()) == read_text_file(e.path().string());
    c.expect(same, "plot " + e.path().filename().string() + " differs on rerun");
    ++compared;
  }

  // A small config run twice end to end: every artifact must match.
  const fs::path small = kWorkDir / "small";
  fs::remove_all(small);
  fs::create_directories(small);
  const std::string cfg = (small / "config.json").string();
  write_text_file(cfg, config_to_json(inflect::testing::tiny_experiment()));
  std::string out_a, out_b;
  const bool ran = run_cli("run --config " + cfg + " --out-dir " + (small / "a").string(), &out_a) == 0 &&
                   run_cli("run --config " + cfg + " --out-dir " + (small / "b").string(), &out_b) == 0;
  c.expect(ran, "small-config runs failed");
  if (ran) {
    c.expect(out_a == out_b, "small-config stdout differs");
    const std::vector<std::string> files = files_under(small / "a");
    c.expect(files == files_under(small / "b"), "small-config runs produced different file sets");
    for (const std::string& f : files) {
      if (f == "run.manifest.json") continue;  // lists absolute artifact paths
      c.expect(read_text_file((small / "a" / f).string()) == read_text_file((small / "b" / f).string()),
               "small config: " + f + " differs");
      ++compared;
    }
  }
  c.note(std::to_string(compared) + " artifacts byte-identical across reruns");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };
  fs::create_directories(kWorkDir);

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient oracle"},          {2, "softmax cross-entropy gradient"}, {3, "metric unit tests"},
      {4, "locator reproduction"},     {5, "LoRA contracts"},                 {6, "saturation and suppression"},
      {7, "strategy contracts"},       {8, "band consistency"},               {9, "probe sweep"},
      {10, "reproducibility"}};
  int hard_failures = 0;
  for (const auto& [n, name] : names) {
    if (!wanted(n)) continue;
    Check c;
    try {
      if (n >= 6 || n == 3) {
        const Pipeline& p = pipeline();
        if (!p.ok) throw std::runtime_error("pipeline unavailable: " + p.error);
        switch (n) {
          case 3: criterion_metrics(c, p.dir); break;
          case 6: criterion_saturation(c, p); break;
          case 7: criterion_strategies(c, p); break;
          case 8: criterion_bands(c, p); break;
          case 9: criterion_probes(c, p); break;
          case 10: criterion_reproducibility(c, p); break;
        }
      } else {
        switch (n) {
          case 1: criterion_gradients(c); break;
          case 2: criterion_cross_entropy(c); break;
          case 4: criterion_locator(c); break;
          case 5: criterion_lora(c); break;
        }
      }
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
      c.soft = false;
    }
    const bool pass = c.passed();
    if (!pass && !c.soft) ++hard_failures;
    std::cout << "criterion " << n << " (" << name << "): " << (pass ? "PASS" : c.soft ? "FAIL (soft)" : "FAIL")
              << "\n";
    for (const std::string& note : c.notes) std::cout << "    " << note << "\n";
    for (const std::string& f : c.failures) std::cout << "    failed: " << f << "\n";
    std::cout.flush();
  }
  return hard_failures == 0 ? 0 : 1;
}
