// Copyright 2026 The dlip Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// dlip: command-line front end for data preparation, training, sweeps,
// gradient checks, evaluation and attention export.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "dlip/checks.hpp"
#include "dlip/errors.hpp"
#include "dlip/eval.hpp"
#include "dlip/experiment.hpp"
#include "dlip/prepare.hpp"
#include "dlip/synthetic.hpp"
#include "dlip/trainer.hpp"

namespace fs = std::filesystem;
using namespace dlip;

namespace {

constexpr const char* kCheckpointName = "checkpoint.dlip";

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::binary | mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t a = 0, b = 0;
    const int h = std::stoi(s.substr(0, x), &a);
    const int w = std::stoi(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw UsageError("grid must look like HxW, got '" + s + "'");
  }
}

TrainConfig build_config(const std::string& config_path, const std::vector<std::string>& sets) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

// ---- prepare -------------------------------------------------------------

struct PrepareArgs {
  std::string raw;
  std::vector<std::string> longs;
  std::vector<std::string> shorts;
  std::string out;
};

int run_prepare(const PrepareArgs& a) {
  if (a.longs.size() != a.shorts.size()) {
    throw UsageError("need one --short file per --long file");
  }
  const CaptionFile raw = load_caption_file(a.raw);
  std::vector<CaptionSource> sources;
  for (std::size_t s = 0; s < a.longs.size(); ++s) {
    sources.push_back({fs::path(a.longs[s]).stem().string(), load_caption_file(a.longs[s]),
                       load_caption_file(a.shorts[s])});
  }
  const auto records = merge_captions(raw, sources);
  save_dataset(records, a.out);
  write_histogram(caption_histogram(records), std::cout);
  return 0;
}

// ---- gen-synthetic -------------------------------------------------------

struct SyntheticArgs {
  SyntheticOptions options;
  std::string grid = "4x4";
  std::string out;
};

int run_gen_synthetic(SyntheticArgs a) {
  std::tie(a.options.grid_h, a.options.grid_w) = parse_grid(a.grid);
  const auto data = generate_synthetic(a.options);
  write_synthetic(data, a.out);
  std::cout << "wrote " << data.corpus.records.size() << " images to " << a.out << '\n';
  return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  std::string resume;
  long max_steps = -1;
  long checkpoint_every = 0;
};

template <class T>
int train_with(Trainer<T> trainer, const TrainArgs& a, bool resumed) {
  const fs::path out(a.out);
  {
    auto cfg_out = open_out(out / "config.txt");
    cfg_out << config_to_text(trainer.state().config);
  }
  const fs::path metrics_path = out / "metrics.csv";
  const bool append = resumed && fs::exists(metrics_path);
  auto metrics = open_out(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!append) metrics << kMetricsHeader << '\n';
  trainer.run(
      [&](const StepMetrics& m) {
        metrics << format_metrics(m) << '\n';
        if (a.checkpoint_every > 0 && (m.step + 1) % a.checkpoint_every == 0) {
          metrics.flush();
          save_checkpoint(trainer.state(), out / kCheckpointName);
        }
      },
      a.max_steps);
  metrics.flush();
  save_checkpoint(trainer.state(), out / kCheckpointName);
  std::cout << "trained to step " << trainer.state().step << " of " << trainer.total_steps()
            << "; checkpoint " << (out / kCheckpointName).string() << '\n';
  return 0;
}

int run_train(const TrainArgs& a) {
  if (!a.resume.empty() && (!a.config.empty() || !a.sets.empty())) {
    throw UsageError("--resume takes its configuration from the checkpoint; drop --config/--set");
  }
  const Corpus corpus = load_corpus(a.data);
  fs::create_directories(a.out);
  if (!a.resume.empty()) {
    if (checkpoint_scalar_bytes(a.resume) == 4) {
      return train_with(Trainer<float>(corpus, load_checkpoint<float>(a.resume)), a, true);
    }
    return train_with(Trainer<double>(corpus, load_checkpoint<double>(a.resume)), a, true);
  }
  const TrainConfig cfg = build_config(a.config, a.sets);
  if (cfg.numeric_mode == NumericMode::kF32) {
    return train_with(Trainer<float>::create(corpus, cfg), a, false);
  }
  return train_with(Trainer<double>::create(corpus, cfg), a, false);
}

// ---- sweep ---------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::string eval_data;
  std::string out;
  std::string param = "k";
  std::vector<std::string> values;
  std::string config;
  std::vector<std::string> sets;
};

int run_sweep(SweepArgs a) {
  if (a.param != "k" && a.param != "sigma") throw UsageError("--param must be k or sigma");
  if (a.values.empty()) {
    a.values = a.param == "k" ? std::vector<std::string>{"3", "4", "5", "6", "7", "8", "9", "10"}
                              : std::vector<std::string>{"0", "0.1", "0.3", "0.5", "0.7"};
  }
  const TrainConfig base = build_config(a.config, a.sets);
  std::vector<TrainConfig> cells;
  for (const auto& v : a.values) {
    TrainConfig cfg = base;
    set_config_value(cfg, a.param, v);
    cfg.validate();
    cells.push_back(cfg);
  }
  const Corpus train = load_corpus(a.data);
  const Corpus eval = load_corpus(a.eval_data);
  fs::create_directories(a.out);
  auto csv = open_out(fs::path(a.out) / "sweep.csv");
  csv << "param,value,steps,final_loss,t2i_r1,t2i_r5,t2i_r10,i2t_r1,i2t_r5,i2t_r10,mean_recall\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const fs::path cell_dir = fs::path(a.out) / (a.param + "_" + a.values[c]);
    fs::create_directories(cell_dir);
    auto metrics = open_out(cell_dir / "metrics.csv");
    metrics << kMetricsHeader << '\n';
    const CellResult r = train_and_evaluate(
        train, eval, cells[c], [&](const StepMetrics& m) { metrics << format_metrics(m) << '\n'; });
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%s,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  a.param.c_str(), a.values[c].c_str(), r.steps, r.final_loss,
                  r.retrieval.text_to_image.at(1), r.retrieval.text_to_image.at(5),
                  r.retrieval.text_to_image.at(10), r.retrieval.image_to_text.at(1),
                  r.retrieval.image_to_text.at(5), r.retrieval.image_to_text.at(10),
                  mean_recall(r.retrieval));
    csv << buf << std::flush;
    std::cout << buf << std::flush;
  }
  return 0;
}

// ---- gradcheck -----------------------------------------------------------

struct GradcheckArgs {
  int instances = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  int directions = 32;
  bool encoder = false;
};

void print_summary(const std::string& name, const FdReport& worst, int instances, int directions,
                   std::size_t redraws, double tol) {
  std::printf("%-14s instances %3d  directions %3d  redraws %3zu  max_rel_error %.3e  %s\n",
              name.c_str(), instances, directions, redraws, worst.max_rel_error,
              worst.passed(tol) ? "PASS" : "FAIL");
}

int run_gradcheck(const GradcheckArgs& a) {
  if (a.instances < 1 || a.directions < 1) throw UsageError("--instances and --directions must be >= 1");
  bool ok = true;
  for (const LossKind kind : {LossKind::kClip, LossKind::kMpcl, LossKind::kGrouping, LossKind::kTotal}) {
    Engine eng(derive_seed(a.seed, {static_cast<std::uint64_t>(kind)}));
    FdReport worst;
    std::size_t redraws = 0;
    for (int i = 0; i < a.instances; ++i) {
      const LossInstance inst = random_loss_instance(kind, eng);
      FdOptions opt;
      opt.directions = a.directions;
      opt.seed = derive_seed(a.seed, {static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(i)});
      FdReport r = check_loss_gradient(kind, inst, opt);
      redraws += r.redraws;
      if (i == 0 || r.max_rel_error > worst.max_rel_error) worst = std::move(r);
    }
    ok = ok && worst.passed(a.tolerance);
    print_summary(std::string(to_string(kind)), worst, a.instances, a.directions, redraws, a.tolerance);
  }
  if (a.encoder) {
    EncoderConfig enc;
    enc.embed_dim = 16;
    enc.heads = 2;
    enc.depth = 2;
    enc.image_h = enc.image_w = 8;
    enc.grid_h = enc.grid_w = 2;
    enc.max_len = 8;
    enc.vocab_size = 12;
    enc.param_seed = a.seed;
    DualEncoder<double> model(enc);
    Engine eng(derive_seed(a.seed, {99}));
    std::vector<Tensor> images(2);
    for (auto& t : images) {
      t.shape = {enc.channels, enc.image_h, enc.image_w};
      t.data.resize(static_cast<std::size_t>(enc.channels * enc.image_h * enc.image_w));
      for (float& x : t.data) x = static_cast<float>(normal01(eng));
    }
    std::vector<TokenIds> texts(3);
    for (std::size_t s = 0; s < texts.size(); ++s) {
      texts[s].ids.assign(static_cast<std::size_t>(enc.max_len), Tokenizer::kPadId);
      texts[s].length = static_cast<int>(2 + s);
      for (int p = 0; p < texts[s].length; ++p) {
        texts[s].ids[static_cast<std::size_t>(p)] = 2 + static_cast<int>(uniform_index(eng, 10));
      }
    }
    std::vector<const Tensor*> ip;
    for (const auto& t : images) ip.push_back(&t);
    std::vector<const TokenIds*> tp;
    for (const auto& t : texts) tp.push_back(&t);
    FdOptions opt;
    opt.directions = a.directions;
    opt.seed = a.seed;
    const FdReport r = check_encoder_gradient(model, ip, tp, opt);
    ok = ok && r.passed(a.tolerance);
    print_summary("encoders", r, 1, a.directions, r.redraws, a.tolerance);
  }
  std::cout << (ok ? "gradcheck: PASS" : "gradcheck: FAIL") << '\n';
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

// ---- eval / export-attn --------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

template <class T>
int eval_with(const RunState<T>& state, const EvalArgs& a) {
  const fs::path data(a.data);
  const Corpus corpus = load_corpus(data);
  auto rows = report_rows(evaluate_retrieval(state.model, state.tokenizer, corpus));
  if (fs::exists(data / "classes.txt") && fs::exists(data / "ground_truth.jsonl")) {
    const auto classes = load_classes(data / "classes.txt");
    const auto truth = load_ground_truth(data / "ground_truth.jsonl");
    if (truth.size() != corpus.records.size()) {
      throw DimensionMismatch("ground_truth.jsonl does not match captions.jsonl");
    }
    std::vector<int> labels;
    for (const auto& t : truth) labels.push_back(t.label);
    const Mat<double> images = encode_images(state.model, std::span<const Tensor>(corpus.images));
    const Mat<double> cls = class_embeddings(state.model, state.tokenizer,
                                             std::span<const std::string>(classes));
    rows.emplace_back("zeroshot_accuracy", zeroshot_classify(images, cls, labels).accuracy);
  }
  fs::create_directories(a.out);
  auto out = open_out(fs::path(a.out) / "report.csv");
  write_report(rows, out);
  write_report(rows, std::cout);
  return 0;
}

int run_eval(const EvalArgs& a) {
  if (checkpoint_scalar_bytes(a.checkpoint) == 4) return eval_with(load_checkpoint<float>(a.checkpoint), a);
  return eval_with(load_checkpoint<double>(a.checkpoint), a);
}

struct ExportArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::optional<double> sigma;
  std::vector<std::string> ids;
  int limit = 0;
};

template <class T>
int export_with(const RunState<T>& state, const ExportArgs& a) {
  const double sigma = a.sigma.value_or(state.config.sigma);
  if (!(sigma >= 0 && sigma < 1)) throw UsageError("--sigma must lie in [0, 1)");
  const Corpus corpus = load_corpus(a.data);
  std::vector<std::size_t> picks;
  if (!a.ids.empty()) {
    for (const auto& id : a.ids) {
      std::size_t i = 0;
      while (i < corpus.records.size() && corpus.records[i].image_id != id) ++i;
      if (i == corpus.records.size()) throw DataError("unknown image id '" + id + "'");
      picks.push_back(i);
    }
  } else {
    const std::size_t n = a.limit > 0 ? std::min<std::size_t>(static_cast<std::size_t>(a.limit), corpus.records.size())
                                      : corpus.records.size();
    for (std::size_t i = 0; i < n; ++i) picks.push_back(i);
  }
  fs::create_directories(a.out);
  auto out = open_out(fs::path(a.out) / "attention.jsonl");
  std::size_t written = 0;
  for (const std::size_t i : picks) {
    std::vector<std::string> subs;
    for (const auto& sentences : corpus.records[i].long_captions) {
      subs.insert(subs.end(), sentences.begin(), sentences.end());
    }
    const auto maps = attention_maps(state.model, state.tokenizer, corpus.images[i],
                                     corpus.records[i].image_id, std::span<const std::string>(subs), sigma);
    export_attention(maps, out);
    written += maps.size();
  }
  std::cout << "wrote " << written << " attention maps to " << (fs::path(a.out) / "attention.jsonl").string()
            << '\n';
  return 0;
}

int run_export(const ExportArgs& a) {
  if (checkpoint_scalar_bytes(a.checkpoint) == 4) return export_with(load_checkpoint<float>(a.checkpoint), a);
  return export_with(load_checkpoint<double>(a.checkpoint), a);
}

// ---- stats ---------------------------------------------------------------

int run_stats(const std::string& dataset) {
  const auto records = load_dataset(dataset);
  write_histogram(caption_histogram(records), std::cout);
  return 0;
}

// DLIP_NUM_THREADS caps Eigen's worker threads. The build is single-threaded
// unless Eigen was compiled with OpenMP, so this is an upper bound only.
void apply_thread_cap() {
  const char* env = std::getenv("DLIP_NUM_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    throw UsageError(std::string("DLIP_NUM_THREADS must be a positive integer, got ") + env);
  }
  Eigen::setNbThreads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-encoder image-text pretraining with sampled sub-captions", "dlip"};
  app.require_subcommand(1);
  std::function<int()> action;

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Merge raw, long and short caption files into a dataset");
  prepare->add_option("--raw", prep.raw, "JSONL of {image_id, caption} raw captions")->required();
  prepare->add_option("--long", prep.longs, "Long-caption JSONL, one file per source")->required();
  prepare->add_option("--short", prep.shorts, "Short-caption JSONL, same order as --long")->required();
  prepare->add_option("--out", prep.out, "Output dataset JSONL")->required();
  prepare->callback([&] { action = [&] { return run_prepare(prep); }; });

  SyntheticArgs syn;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a toy blob corpus with captions and ground truth");
  gen->add_option("--images", syn.options.images, "Number of images")->capture_default_str();
  gen->add_option("--classes", syn.options.classes, "Number of object classes (2-12)")->capture_default_str();
  gen->add_option("--grid", syn.grid, "Patch grid as HxW")->capture_default_str();
  gen->add_option("--patch-size", syn.options.patch_size, "Pixels per grid cell side")->capture_default_str();
  gen->add_option("--min-blobs", syn.options.min_blobs, "Fewest objects per image")->capture_default_str();
  gen->add_option("--max-blobs", syn.options.max_blobs, "Most objects per image")->capture_default_str();
  gen->add_option("--junk-prob", syn.options.junk_prob, "Chance of an uninformative raw caption")
      ->capture_default_str();
  gen->add_option("--id-prefix", syn.options.id_prefix, "Image id prefix")->capture_default_str();
  gen->add_option("--seed", syn.options.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", syn.out, "Output directory")->required();
  gen->callback([&] { action = [&] { return run_gen_synthetic(syn); }; });

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model and write metrics and a checkpoint");
  train->add_option("--data", tr.data, "Corpus directory (captions.jsonl and images/)")->required();
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--config", tr.config, "key=value run configuration file");
  train->add_option("--set", tr.sets, "Override one config key, as key=value (repeatable)");
  train->add_option("--resume", tr.resume, "Continue from this checkpoint");
  train->add_option("--max-steps", tr.max_steps, "Stop after this many steps (-1 = run to the end)")
      ->capture_default_str();
  train->add_option("--checkpoint-every", tr.checkpoint_every, "Also checkpoint every N steps (0 = end only)")
      ->capture_default_str();
  train->callback([&] { action = [&] { return run_train(tr); }; });

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Train one model per value of K or sigma and score retrieval");
  sweep->add_option("--data", sw.data, "Training corpus directory")->required();
  sweep->add_option("--eval-data", sw.eval_data, "Held-out corpus directory")->required();
  sweep->add_option("--out", sw.out, "Output directory")->required();
  sweep->add_option("--param", sw.param, "Swept key: k or sigma")->capture_default_str();
  sweep->add_option("--values", sw.values, "Values to try (default k: 3..10, sigma: 0 0.1 0.3 0.5 0.7)");
  sweep->add_option("--config", sw.config, "Base key=value configuration file");
  sweep->add_option("--set", sw.sets, "Override one base config key, as key=value (repeatable)");
  sweep->callback([&] { action = [&] { return run_sweep(sw); }; });

  GradcheckArgs gc;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--instances", gc.instances, "Random instances per loss")->capture_default_str();
  grad->add_option("--directions", gc.directions, "Random directions per instance")->capture_default_str();
  grad->add_option("--tol", gc.tolerance, "Pass threshold on max relative error")->capture_default_str();
  grad->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  grad->add_flag("--encoder", gc.encoder, "Also check a small dual encoder end to end");
  grad->callback([&] { action = [&] { return run_gradcheck(gc); }; });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score retrieval and zero-shot accuracy for a checkpoint");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", ev.data, "Corpus directory to evaluate on")->required();
  eval->add_option("--out", ev.out, "Output directory for report.csv")->required();
  eval->callback([&] { action = [&] { return run_eval(ev); }; });

  ExportArgs ex;
  double sigma = 0;
  auto* exp = app.add_subcommand("export-attn", "Write per-sub-caption pooling grids as JSON lines");
  exp->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
  exp->add_option("--data", ex.data, "Corpus directory")->required();
  exp->add_option("--out", ex.out, "Output directory for attention.jsonl")->required();
  auto* sigma_opt = exp->add_option("--sigma", sigma, "Sparsity threshold (default: the checkpoint's)");
  exp->add_option("--ids", ex.ids, "Only these image ids");
  exp->add_option("--limit", ex.limit, "Only the first N images (0 = all)")->capture_default_str();
  exp->callback([&] {
    if (*sigma_opt) ex.sigma = sigma;
    action = [&] { return run_export(ex); };
  });

  std::string stats_path;
  auto* stats = app.add_subcommand("stats", "Print the sub-caption and token histogram of a dataset");
  stats->add_option("--dataset", stats_path, "Dataset JSONL")->required();
  stats->callback([&] { action = [&] { return run_stats(stats_path); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    apply_thread_cap();
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
