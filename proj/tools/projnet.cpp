#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "projnet/checkpoint.hpp"
#include "projnet/data.hpp"
#include "projnet/errors.hpp"
#include "projnet/metrics.hpp"
#include "projnet/nn.hpp"
#include "projnet/solve.hpp"

using namespace projnet;

namespace {

struct DataFlags {
  std::string dataset = "xor";
  std::string data_dir;
  std::size_t samples = 200;
  double noise = 0.0;
  double val_fraction = 0.1;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::size_t seq_len = 16;
};

struct ModelFlags {
  std::string arch = "mlp";
  std::size_t hidden = 16;
  std::size_t depth = 1;
  bool skip = false;
  std::size_t quantize_levels = 0;
  double quantize_alpha = 1.0;
  std::size_t embed_dim = 8;
};

struct TrainFlags {
  std::string method = "dr";
  std::string loss = "ce";
  double lambda = 5.0;
  double margin = 1.0;
  std::size_t batch_size = 256;
  std::size_t steps_per_batch = 50;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::size_t val_every = 1000;
  std::size_t patience = 5;
  std::size_t log_every = 0;
  std::string out = "checkpoint.json";
  std::string metrics = "metrics.csv";
  bool weighted = false;
  std::string dr_order = "B";
  int threads = 0;
};

struct Data {
  Dataset train, val, test;
  std::string vocab;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_data_flags(CLI::App* c, DataFlags& d) {
  c->add_option("--dataset", d.dataset, "xor, moons, blobs, mnist or text")
      ->check(CLI::IsMember({"xor", "moons", "blobs", "mnist", "text"}));
  c->add_option("--data-dir", d.data_dir, "MNIST IDX directory, or the text file for --dataset text");
  c->add_option("--samples", d.samples, "points generated for synthetic sets");
  c->add_option("--noise", d.noise, "noise level for synthetic sets (blobs: centre separation)");
  c->add_option("--val-fraction", d.val_fraction, "share of the training data held out for validation")
      ->check(CLI::Range(0.0, 0.9));
  c->add_option("--train-limit", d.train_limit, "use only the first N training samples");
  c->add_option("--test-limit", d.test_limit, "use only the first N test samples");
  c->add_option("--seq-len", d.seq_len, "unroll length for --dataset text")->check(CLI::PositiveNumber);
}

void add_model_flags(CLI::App* c, ModelFlags& m) {
  c->add_option("--arch", m.arch, "mlp, cnn, rnn or identity")->check(CLI::IsMember({"mlp", "cnn", "rnn", "identity"}));
  c->add_option("--hidden", m.hidden, "hidden width (channels for cnn)");
  c->add_option("--depth", m.depth, "number of hidden layers");
  c->add_flag("--skip", m.skip, "feed every hidden output to the readout");
  c->add_option("--quantize-levels", m.quantize_levels, "insert a quantize layer with k levels after each ReLU");
  c->add_option("--quantize-alpha", m.quantize_alpha, "quantize step");
  c->add_option("--embed-dim", m.embed_dim, "character embedding width for rnn");
}

void validate_flags(const DataFlags& d, const ModelFlags& m) {
  if ((d.dataset == "mnist" || d.dataset == "text") && d.data_dir.empty())
    throw UsageError("--dataset " + d.dataset + " requires --data-dir");
  if (m.arch == "rnn" && d.dataset != "text") throw UsageError("--arch rnn needs --dataset text");
  if (d.dataset == "text" && m.arch != "rnn") throw UsageError("--dataset text needs --arch rnn");
  if (m.arch == "cnn" && d.dataset != "mnist") throw UsageError("--arch cnn needs image data (--dataset mnist)");
  if (m.arch == "rnn" && m.skip) throw UsageError("--skip is not available for --arch rnn");
  if (m.arch == "rnn" && m.quantize_levels) throw UsageError("--quantize-levels is not available for --arch rnn");
  if (m.quantize_levels == 1) throw UsageError("--quantize-levels needs at least 2 levels");
  if (m.arch == "identity" && m.skip) throw UsageError("--skip needs hidden layers");
}

Data load_data(const DataFlags& f, bool image, std::uint64_t seed) {
  Data r;
  auto limit = [](const Dataset& d, std::size_t n) {
    if (n == 0 || n >= d.size()) return d;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return d.subset(idx);
  };
  if (f.dataset == "mnist") {
    MnistData m = load_mnist_dir(f.data_dir, image);
    Dataset train = limit(m.train, f.train_limit);
    Splits s = split_dataset(train, 1 - f.val_fraction, f.val_fraction, 0.0, seed);
    r.train = std::move(s.train);
    r.val = std::move(s.val);
    r.test = limit(m.test, f.test_limit);
    return r;
  }
  Dataset all;
  if (f.dataset == "xor") all = make_xor(f.samples, f.noise, seed);
  if (f.dataset == "moons") all = make_two_moons(f.samples, f.noise > 0 ? f.noise : 0.1, seed);
  if (f.dataset == "blobs") all = make_blobs(f.samples, f.noise > 0 ? f.noise : 2.0, seed);
  if (f.dataset == "text") {
    CharCorpus c = load_char_text(f.data_dir, f.seq_len);
    all = std::move(c.data);
    r.vocab = c.vocab;
  }
  all = limit(all, f.train_limit);
  double test = f.dataset == "xor" ? 0.0 : f.val_fraction;
  Splits s = split_dataset(all, 1 - f.val_fraction - test, f.val_fraction, test, seed);
  r.train = std::move(s.train);
  r.val = std::move(s.val);
  r.test = test > 0 ? std::move(s.test) : r.train;
  return r;
}

nn::ModelSpec make_model(const ModelFlags& m, const Dataset& d) {
  nn::ModelSpec s;
  Shape in = d.sample_shape();
  if (m.arch == "identity") return nn::ModelSpec::identity(in.at(0));
  if (m.arch == "mlp") s = nn::ModelSpec::mlp(numel(in), m.hidden, m.depth, d.classes, m.skip);
  if (m.arch == "cnn") s = nn::ModelSpec::cnn(in.at(0), in.at(1), in.at(2), m.hidden, m.depth, d.classes, m.skip);
  if (m.arch == "rnn") s = nn::ModelSpec::rnn(d.classes, m.embed_dim, m.hidden, m.depth, in.at(0));
  if (m.quantize_levels) s.quantize = nn::QuantSpec{m.quantize_levels, m.quantize_alpha};
  s.validate();
  return s;
}

struct Eval {
  double loss = 0, accuracy = 0;
};

Eval evaluate(const nn::ModelSpec& spec, const ParamTree& p, const Dataset& d, const TargetSpec& t) {
  if (d.size() == 0) return {};
  Tensor rows = nn::logit_rows(spec, nn::forward_eval(spec, p, d.inputs));
  return {nn::mean_loss(rows, d.labels, t), nn::accuracy(rows, d.labels)};
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int run_train(const DataFlags& df, const ModelFlags& mf, const TrainFlags& tf) {
  validate_flags(df, mf);
  SolverConfig cfg;
  cfg.method = parse_method(tf.method);
  cfg.loss = tf.loss == "margin" ? TargetKind::Margin : TargetKind::CrossEntropyProx;
  cfg.lambda = tf.lambda;
  cfg.margin = tf.margin;
  cfg.batch_size = tf.batch_size;
  cfg.steps_per_batch = tf.steps_per_batch;
  cfg.max_steps = tf.max_steps;
  cfg.seed = tf.seed;
  cfg.weighted_consensus = tf.weighted;
  cfg.dr_inner = tf.dr_order == "A" ? Part::A : Part::B;
  cfg.log_every = tf.log_every;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  set_threads(tf.threads);

  Data data = load_data(df, mf.arch == "cnn", tf.seed);
  if (data.train.size() == 0) throw UsageError("the training split is empty");
  nn::ModelSpec spec = make_model(mf, data.train);
  ParamTree params = nn::init_params(spec, tf.seed);
  TargetSpec target = cfg.target();
  MetricsWriter metrics(tf.metrics);

  double last_residual = 0;
  std::size_t checks = 0, bad = 0;
  double best = -1;
  ParamTree best_params = params;
  TrainHooks hooks;
  hooks.on_record = [&](const StepRecord& r) {
    last_residual = r.residual;
    metrics.write({r.step, "train", r.train_loss, r.train_accuracy, r.residual, r.elapsed_ms});
    std::fprintf(stderr, "step %zu  loss %.4f  acc %.4f  residual %.4g\n", r.step, r.train_loss, r.train_accuracy,
                 r.residual);
  };
  auto t0 = std::chrono::steady_clock::now();
  hooks.on_batch_end = [&](std::size_t step, const ParamTree& p) {
    if (tf.val_every == 0 || data.val.size() == 0 || step / tf.val_every <= checks) return true;
    checks = step / tf.val_every;
    Eval v = evaluate(spec, p, data.val, target);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    metrics.write({step, "val", v.loss, v.accuracy, last_residual, ms});
    std::fprintf(stderr, "step %zu  val loss %.4f  val acc %.4f\n", step, v.loss, v.accuracy);
    if (v.accuracy > best) {
      best = v.accuracy;
      best_params = p;
      bad = 0;
    } else if (++bad >= tf.patience) {
      std::fprintf(stderr, "early stop: no validation gain in %zu checks\n", bad);
      return false;
    }
    return true;
  };

  TrainReport rep = train(spec, data.train, cfg, params, hooks);
  ParamTree final_params = best >= 0 && rep.stopped_early ? best_params : rep.params;

  save_checkpoint(tf.out, Checkpoint{kCheckpointVersion, spec, tf.seed, cfg, final_params});
  Eval tr = evaluate(spec, final_params, data.train, target);
  Eval va = evaluate(spec, final_params, data.val, target);
  Eval te = evaluate(spec, final_params, data.test, target);
  std::printf("steps %zu  batches %zu%s\n", rep.steps, rep.batches, rep.stopped_early ? "  (early stop)" : "");
  std::printf("train accuracy %.4f  loss %.4f\n", tr.accuracy, tr.loss);
  if (data.val.size()) std::printf("val accuracy %.4f  loss %.4f\n", va.accuracy, va.loss);
  std::printf("test accuracy %.4f  loss %.4f\n", te.accuracy, te.loss);
  std::printf("checkpoint %s\nmetrics %s\n", tf.out.c_str(), tf.metrics.c_str());
  return 0;
}

int run_eval(const DataFlags& df, const std::string& path, const std::string& split, std::optional<std::uint64_t> seed,
             int threads) {
  set_threads(threads);
  Checkpoint c = load_checkpoint(path);
  ModelFlags mf;
  mf.arch = nn::to_string(c.model.arch);
  mf.skip = c.model.skip;
  mf.depth = c.model.depth;
  validate_flags(df, mf);
  Data data = load_data(df, c.model.arch == nn::Arch::CNN, seed.value_or(c.seed));
  const Dataset& d = split == "train" ? data.train : split == "val" ? data.val : data.test;
  if (d.sample_shape() != c.model.input_shape)
    throw ShapeError("dataset samples " + shape_str(d.sample_shape()) + " do not match the checkpoint model input " +
                     shape_str(c.model.input_shape));
  Eval e = evaluate(c.model, c.params, d, c.solver.target());
  std::printf("split %s  samples %zu\n", split.c_str(), d.size());
  std::printf("accuracy %.4f\nloss %.4f\n", e.accuracy, e.loss);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"projnet: neural network training by iterated projections onto local constraint sets"};
  app.require_subcommand(1);

  DataFlags df;
  ModelFlags mf;
  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint and a metrics CSV");
  add_data_flags(tr, df);
  add_model_flags(tr, mf);
  tr->add_option("--method", tf.method, "ap, dr or cp")->check(CLI::IsMember({"ap", "dr", "cp"}));
  tr->add_option("--loss", tf.loss, "ce or margin")->check(CLI::IsMember({"ce", "margin"}));
  tr->add_option("--lambda", tf.lambda, "cross-entropy prox scale");
  tr->add_option("--margin", tf.margin, "margin for --loss margin");
  tr->add_option("--batch-size", tf.batch_size, "samples per batch")->check(CLI::PositiveNumber);
  tr->add_option("--steps-per-batch", tf.steps_per_batch, "solver steps per batch")->check(CLI::PositiveNumber);
  tr->add_option("--max-steps", tf.max_steps, "total solver step budget");
  tr->add_option("--seed", tf.seed, "seed for initialization, shuffling and splits");
  tr->add_option("--val-every", tf.val_every, "validation cadence in steps (0 disables)");
  tr->add_option("--patience", tf.patience, "validation checks without gain before stopping")->check(CLI::PositiveNumber);
  tr->add_option("--log-every", tf.log_every, "training record cadence in steps (0: once per batch)");
  tr->add_option("--out", tf.out, "checkpoint path");
  tr->add_option("--metrics", tf.metrics, "metrics CSV path");
  tr->add_flag("--weighted-consensus", tf.weighted, "weight consensus by copy count");
  tr->add_option("--dr-order", tf.dr_order, "partition reflected first by DR (holds the targets when B)")
      ->check(CLI::IsMember({"A", "B"}));
  tr->add_option("--threads", tf.threads, "worker threads (0: runtime default)");

  DataFlags ef;
  std::string ckpt, split = "test";
  std::optional<std::uint64_t> eseed;
  int ethreads = 0;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  add_data_flags(ev, ef);
  ev->add_option("--checkpoint", ckpt, "checkpoint written by train")->required();
  ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--seed", eseed, "split seed (default: the checkpoint's)");
  ev->add_option("--threads", ethreads, "worker threads (0: runtime default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (tr->parsed()) return run_train(df, mf, tf);
    return run_eval(ef, ckpt, split, eseed, ethreads);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
