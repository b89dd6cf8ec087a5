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

#include "dlip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dlip/errors.hpp"
#include "dlip/rng.hpp"

namespace dlip {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw UsageError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

int parse_small_int(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < -1000000000LL || x > 1000000000LL) {
    throw UsageError("config key '" + key + "': value out of range");
  }
  return static_cast<int>(x);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid config: " + what); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (k < 1) fail("k must be >= 1");
  if (!(sigma >= 0.0 && sigma < 1.0)) fail("sigma must lie in [0, 1)");
  if (lambda_mpcl < 0 || lambda_s < 0) fail("loss weights must be >= 0");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    fail("adam_betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (warmup_iters < 0) fail("warmup_iters must be >= 0");
  if (schedule != "cosine_decay") fail("unknown schedule '" + schedule + "'");
  if (embed_dim < 1 || depth < 0 || heads < 1 || mlp_ratio < 1) fail("bad encoder shape");
  if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (grid_h < 1 || grid_w < 1) fail("grid must be positive");
  if (max_len < 1) fail("max_len must be >= 1");
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "batch_size") {
    c.batch_size = parse_small_int(key, v);
  } else if (key == "epochs") {
    c.epochs = parse_small_int(key, v);
  } else if (key == "k") {
    c.k = parse_small_int(key, v);
  } else if (key == "sigma") {
    c.sigma = parse_double(key, v);
  } else if (key == "lambda_mpcl") {
    c.lambda_mpcl = parse_double(key, v);
  } else if (key == "lambda_s") {
    c.lambda_s = parse_double(key, v);
  } else if (key == "learning_rate") {
    c.learning_rate = parse_double(key, v);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_double(key, v);
  } else if (key == "adam_betas") {
    const auto comma = v.find(',');
    if (comma == std::string::npos) {
      throw UsageError("config key 'adam_betas': expected 'b1,b2'");
    }
    c.adam_beta1 = parse_double(key, trim(v.substr(0, comma)));
    c.adam_beta2 = parse_double(key, trim(v.substr(comma + 1)));
  } else if (key == "adam_eps") {
    c.adam_eps = parse_double(key, v);
  } else if (key == "warmup_iters") {
    c.warmup_iters = parse_small_int(key, v);
  } else if (key == "schedule") {
    c.schedule = v;
  } else if (key == "seed") {
    const long long s = parse_int(key, v);
    if (s < 0) throw UsageError("config key 'seed': must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "numeric_mode") {
    if (v == "f32") {
      c.numeric_mode = NumericMode::kF32;
    } else if (v == "f64") {
      c.numeric_mode = NumericMode::kF64;
    } else {
      throw UsageError("config key 'numeric_mode': expected f32 or f64");
    }
  } else if (key == "grad_clip") {
    c.grad_clip = parse_double(key, v);
  } else if (key == "text_source") {
    if (v == "sampled") {
      c.text_source = TextSource::kSampled;
    } else if (v == "raw") {
      c.text_source = TextSource::kRaw;
    } else {
      throw UsageError("config key 'text_source': expected sampled or raw");
    }
  } else if (key == "grouping_negatives") {
    if (v == "within_image") {
      c.grouping_negatives = GroupingNegatives::kWithinImage;
    } else if (v == "cross_image") {
      c.grouping_negatives = GroupingNegatives::kCrossImage;
    } else {
      throw UsageError("config key 'grouping_negatives': expected within_image or cross_image");
    }
  } else if (key == "include_sources") {
    c.include_sources.clear();
    if (v != "all") {
      std::stringstream ss(v);
      std::string part;
      while (std::getline(ss, part, ',')) {
        c.include_sources.push_back(parse_small_int(key, trim(part)));
      }
    }
  } else if (key == "embed_dim") {
    c.embed_dim = parse_small_int(key, v);
  } else if (key == "depth") {
    c.depth = parse_small_int(key, v);
  } else if (key == "heads") {
    c.heads = parse_small_int(key, v);
  } else if (key == "mlp_ratio") {
    c.mlp_ratio = parse_small_int(key, v);
  } else if (key == "grid") {
    const auto x = v.find('x');
    if (x == std::string::npos) throw UsageError("config key 'grid': expected HxW");
    c.grid_h = parse_small_int(key, v.substr(0, x));
    c.grid_w = parse_small_int(key, v.substr(x + 1));
  } else if (key == "max_len") {
    c.max_len = parse_small_int(key, v);
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_text(const TrainConfig& c) {
  std::string sources = "all";
  if (!c.include_sources.empty()) {
    sources.clear();
    for (std::size_t i = 0; i < c.include_sources.size(); ++i) {
      if (i) sources += ',';
      sources += std::to_string(c.include_sources[i]);
    }
  }
  std::string out;
  auto put = [&](const char* key, const std::string& v) {
    out += key;
    out += '=';
    out += v;
    out += '\n';
  };
  put("batch_size", std::to_string(c.batch_size));
  put("epochs", std::to_string(c.epochs));
  put("k", std::to_string(c.k));
  put("sigma", fmt(c.sigma));
  put("lambda_mpcl", fmt(c.lambda_mpcl));
  put("lambda_s", fmt(c.lambda_s));
  put("learning_rate", fmt(c.learning_rate));
  put("weight_decay", fmt(c.weight_decay));
  put("adam_betas", fmt(c.adam_beta1) + "," + fmt(c.adam_beta2));
  put("adam_eps", fmt(c.adam_eps));
  put("warmup_iters", std::to_string(c.warmup_iters));
  put("schedule", c.schedule);
  put("seed", std::to_string(c.seed));
  put("numeric_mode", c.numeric_mode == NumericMode::kF32 ? "f32" : "f64");
  put("grad_clip", fmt(c.grad_clip));
  put("text_source", c.text_source == TextSource::kSampled ? "sampled" : "raw");
  put("grouping_negatives",
      c.grouping_negatives == GroupingNegatives::kWithinImage ? "within_image" : "cross_image");
  put("include_sources", sources);
  put("embed_dim", std::to_string(c.embed_dim));
  put("depth", std::to_string(c.depth));
  put("heads", std::to_string(c.heads));
  put("mlp_ratio", std::to_string(c.mlp_ratio));
  put("grid", std::to_string(c.grid_h) + "x" + std::to_string(c.grid_w));
  put("max_len", std::to_string(c.max_len));
  return out;
}

double lr_at(long step, const TrainConfig& cfg, long total_steps) {
  const double peak = cfg.learning_rate;
  if (step < cfg.warmup_iters) {
    return peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_iters);
  }
  const long span = std::max<long>(1, total_steps - cfg.warmup_iters);
  const double p =
      std::clamp(static_cast<double>(step - cfg.warmup_iters) / static_cast<double>(span), 0.0, 1.0);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * p));
}

Tokenizer build_tokenizer(const Corpus& corpus, int max_len) {
  std::vector<std::string> texts;
  for (const auto& r : corpus.records) {
    for (auto& cand : build_subcaption_set(r).candidates) texts.push_back(std::move(cand.text));
  }
  return Tokenizer::build(texts, max_len);
}

EncoderConfig encoder_config(const TrainConfig& cfg, const Tokenizer& tok, const Tensor& image) {
  if (image.shape.size() != 3) throw ShapeError("images must have shape C x H x W");
  EncoderConfig e;
  e.embed_dim = cfg.embed_dim;
  e.grid_h = cfg.grid_h;
  e.grid_w = cfg.grid_w;
  e.channels = image.shape[0];
  e.image_h = image.shape[1];
  e.image_w = image.shape[2];
  e.depth = cfg.depth;
  e.heads = cfg.heads;
  e.mlp_ratio = cfg.mlp_ratio;
  e.max_len = tok.max_len();
  e.vocab_size = tok.vocab_size();
  e.param_seed = derive_seed(cfg.seed, {0});
  e.validate();
  return e;
}

std::string format_metrics(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.step, m.total,
                m.mpcl, m.sub, m.tau, m.lr, m.grad_norm);
  return buf;
}

template <class T>
RunState<T>::RunState(TrainConfig cfg, Tokenizer tok, EncoderConfig enc)
    : config(std::move(cfg)),
      tokenizer(std::move(tok)),
      model(enc),
      adam_m(model.params().size(), T(0)),
      adam_v(model.params().size(), T(0)) {}

template <class T>
BatchObjective<T> batch_objective(const DualEncoder<T>& model,
                                  std::span<const Tensor* const> images,
                                  std::span<const TokenIds* const> unique_texts,
                                  std::span<const int> text_index, int k, T sigma,
                                  const LossWeights& weights, GroupingNegatives negatives) {
  const auto n = static_cast<Eigen::Index>(images.size());
  if (static_cast<Eigen::Index>(text_index.size()) != n * k) {
    throw DimensionMismatch("expected N*K text slots");
  }
  const int hw = model.config().num_patches();
  const auto img = model.forward_images(images);
  const auto txt = model.forward_texts(unique_texts);
  const Eigen::Index d = img.globals.cols();

  Mat<T> texts(n * k, d);
  for (Eigen::Index r = 0; r < n * k; ++r) texts.row(r) = txt.vectors.row(text_index[r]);

  BatchObjective<T> out;
  out.tau = model.tau();
  out.loss = total_loss<T>(img.globals, texts, img.patches, k, hw, sigma, out.tau, weights,
                           negatives);

  Mat<T> d_unique = Mat<T>::Zero(txt.vectors.rows(), d);
  for (Eigen::Index r = 0; r < n * k; ++r) {
    d_unique.row(text_index[r]) += out.loss.grad_text_vectors.row(r);
  }
  out.grad.assign(model.params().size(), T(0));
  model.backward_images(img, out.loss.grad_image_globals, out.loss.grad_patches, out.grad);
  model.backward_texts(txt, d_unique, out.grad);

  // tau = exp(-s); the clamp is inactive while s stays inside its bounds.
  const T s = model.logit_scale();
  const T s_lo = static_cast<T>(-std::log(kMaxTau));
  const T s_hi = static_cast<T>(-std::log(kMinTau));
  if (s > s_lo && s < s_hi) out.grad[model.layout().logit_scale()] += -out.tau * out.loss.grad_tau;
  return out;
}

template <class T>
Trainer<T>::Trainer(const Corpus& corpus, RunState<T> state)
    : corpus_(corpus), state_(std::move(state)) {
  if (corpus_.records.empty()) throw EmptySet("training corpus is empty");
  if (corpus_.images.size() != corpus_.records.size()) {
    throw DimensionMismatch("corpus has mismatched image and record counts");
  }
  state_.config.validate();
  sets_.reserve(corpus_.records.size());
  tokens_.reserve(corpus_.records.size());
  for (const auto& r : corpus_.records) {
    sets_.push_back(build_subcaption_set(r, state_.config.include_sources, state_.tokenizer.max_len()));
    if (sets_.back().candidates.empty()) {
      throw EmptySet("image '" + r.image_id + "' has no sub-caption candidates");
    }
    auto& toks = tokens_.emplace_back();
    for (const auto& c : sets_.back().candidates) toks.push_back(state_.tokenizer.encode(c.text));
  }
}

template <class T>
Trainer<T> Trainer<T>::create(const Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.images.empty()) throw EmptySet("training corpus is empty");
  Tokenizer tok = build_tokenizer(corpus, cfg.max_len);
  EncoderConfig enc = encoder_config(cfg, tok, corpus.images.front());
  return Trainer(corpus, RunState<T>(cfg, std::move(tok), enc));
}

template <class T>
long Trainer<T>::steps_per_epoch() const {
  const long n = static_cast<long>(corpus_.images.size());
  const long b = std::min<long>(state_.config.batch_size, n);
  return n / b;
}

template <class T>
long Trainer<T>::total_steps() const {
  return steps_per_epoch() * state_.config.epochs;
}

template <class T>
std::vector<std::size_t> Trainer<T>::batch_images(long step) const {
  const std::size_t n = corpus_.images.size();
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(state_.config.batch_size), n);
  const long spe = steps_per_epoch();
  const auto epoch = static_cast<std::uint64_t>(step / spe);
  const auto pos = static_cast<std::size_t>(step % spe);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Engine eng(derive_seed(state_.config.seed, {1, epoch}));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(eng, i)]);
  return {perm.begin() + static_cast<std::ptrdiff_t>(pos * b),
          perm.begin() + static_cast<std::ptrdiff_t>((pos + 1) * b)};
}

template <class T>
std::vector<std::vector<std::size_t>> Trainer<T>::batch_samples(
    long step, std::span<const std::size_t> images) const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(images.size());
  for (const std::size_t idx : images) {
    if (state_.config.text_source == TextSource::kRaw) {
      out.push_back({0});  // candidate 0 is the raw caption
    } else {
      const auto seed = derive_seed(state_.config.seed, {2, static_cast<std::uint64_t>(step), idx});
      out.push_back(sample_subcaptions(sets_[idx], state_.config.k, seed).indices);
    }
  }
  return out;
}

template <class T>
StepMetrics Trainer<T>::train_step() {
  const TrainConfig& cfg = state_.config;
  const long step = state_.step;
  const auto images = batch_images(step);
  const auto samples = batch_samples(step, images);
  const int k = static_cast<int>(samples.front().size());

  std::vector<const Tensor*> image_ptrs;
  std::vector<const TokenIds*> unique;
  std::vector<int> text_index;
  std::unordered_map<std::string, int> seen;
  for (std::size_t i = 0; i < images.size(); ++i) {
    image_ptrs.push_back(&corpus_.images[images[i]]);
    for (const std::size_t c : samples[i]) {
      const auto [it, inserted] =
          seen.try_emplace(sets_[images[i]].candidates[c].text, static_cast<int>(unique.size()));
      if (inserted) unique.push_back(&tokens_[images[i]][c]);
      text_index.push_back(it->second);
    }
  }

  auto obj = batch_objective<T>(state_.model, image_ptrs, unique, text_index, k,
                                static_cast<T>(cfg.sigma), cfg.weights(), cfg.grouping_negatives);

  double sq = 0;
  for (const T g : obj.grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double grad_norm = std::sqrt(sq);
  if (!std::isfinite(static_cast<double>(obj.loss.value)) || !std::isfinite(grad_norm)) {
    std::string ids;
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (i) ids += ',';
      ids += corpus_.records[images[i]].image_id;
    }
    throw NonFiniteLoss("non-finite loss or gradient at step " + std::to_string(step) +
                        "; batch images: " + ids);
  }
  if (cfg.grad_clip > 0 && grad_norm > cfg.grad_clip) {
    const T scale = static_cast<T>(cfg.grad_clip / grad_norm);
    for (T& g : obj.grad) g *= scale;
  }

  // AdamW with decoupled weight decay on matrices and embeddings only.
  const double lr = lr_at(step + 1, cfg, total_steps());
  const double t = static_cast<double>(step + 1);
  const T b1 = static_cast<T>(cfg.adam_beta1);
  const T b2 = static_cast<T>(cfg.adam_beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.adam_beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.adam_beta2, t));
  const T eps = static_cast<T>(cfg.adam_eps);
  const T lr_t = static_cast<T>(lr);
  const T decay = static_cast<T>(lr * cfg.weight_decay);
  auto& p = state_.model.params();
  auto& m = state_.adam_m;
  auto& v = state_.adam_v;
  for (const auto& slot : state_.model.layout().slots()) {
    const std::size_t end = slot.offset + slot.size();
    for (std::size_t i = slot.offset; i < end; ++i) {
      const T g = obj.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      if (slot.decay) p[i] -= decay * p[i];
      p[i] -= lr_t * update;
    }
  }
  state_.model.clamp_logit_scale();
  state_.step = step + 1;

  StepMetrics out;
  out.step = step;
  out.total = static_cast<double>(obj.loss.value);
  out.mpcl = static_cast<double>(obj.loss.mpcl_value);
  out.sub = static_cast<double>(obj.loss.sub_value);
  out.tau = static_cast<double>(obj.tau);
  out.lr = lr;
  out.grad_norm = grad_norm;
  state_.history.push_back(out.total);
  while (state_.history.size() > kHistoryCapacity) state_.history.pop_front();
  return out;
}

template <class T>
void Trainer<T>::run(const std::function<void(const StepMetrics&)>& on_step, long max_steps) {
  const long end = max_steps < 0 ? total_steps()
                                 : std::min(total_steps(), state_.step + max_steps);
  while (state_.step < end) {
    const StepMetrics m = train_step();
    if (on_step) on_step(m);
  }
}

template struct RunState<float>;
template struct RunState<double>;
template class Trainer<float>;
template class Trainer<double>;
template BatchObjective<float> batch_objective<float>(
    const DualEncoder<float>&, std::span<const Tensor* const>, std::span<const TokenIds* const>,
    std::span<const int>, int, float, const LossWeights&, GroupingNegatives);
template BatchObjective<double> batch_objective<double>(
    const DualEncoder<double>&, std::span<const Tensor* const>, std::span<const TokenIds* const>,
    std::span<const int>, int, double, const LossWeights&, GroupingNegatives);

}  // namespace dlip
