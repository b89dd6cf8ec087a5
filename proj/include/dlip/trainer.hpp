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

#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dlip/captions.hpp"
#include "dlip/corpus.hpp"
#include "dlip/encoders.hpp"
#include "dlip/losses.hpp"
#include "dlip/tensor_io.hpp"
#include "dlip/tokenizer.hpp"

namespace dlip {

enum class NumericMode { kF32, kF64 };
enum class TextSource { kSampled, kRaw };

struct TrainConfig {
  int batch_size = 64;
  int epochs = 32;
  int k = 10;
  double sigma = 0.0;
  double lambda_mpcl = 1.0;
  double lambda_s = 0.7;
  double learning_rate = 5e-4;
  double weight_decay = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  int warmup_iters = 100;
  std::string schedule = "cosine_decay";
  std::uint64_t seed = 0;
  NumericMode numeric_mode = NumericMode::kF32;
  double grad_clip = 10.0;  // global-norm clip, <= 0 disables
  TextSource text_source = TextSource::kSampled;
  GroupingNegatives grouping_negatives = GroupingNegatives::kWithinImage;
  std::vector<int> include_sources = {0};  // empty = all
  // encoder shape
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  int grid_h = 4;
  int grid_w = 4;
  int max_len = Tokenizer::kDefaultMaxLen;

  // Throws UsageError on out-of-range values.
  void validate() const;
  LossWeights weights() const { return {lambda_mpcl, lambda_s}; }
  bool operator==(const TrainConfig&) const = default;
};

// key=value lines; '#' starts a comment. Unknown keys and bad values throw
// UsageError.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
// Applies one key=value assignment.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
// Every field, one per line, in a fixed order.
std::string config_to_text(const TrainConfig& cfg);

// Linear warmup from 0 to the peak over warmup_iters, then cosine decay to 0
// at total_steps.
double lr_at(long step, const TrainConfig& cfg, long total_steps);

// Vocabulary over every caption text of the corpus.
Tokenizer build_tokenizer(const Corpus& corpus, int max_len);

EncoderConfig encoder_config(const TrainConfig& cfg, const Tokenizer& tok, const Tensor& image);

struct StepMetrics {
  long step = 0;
  double total = 0;
  double mpcl = 0;
  double sub = 0;
  double tau = 0;
  double lr = 0;
  double grad_norm = 0;
};

inline constexpr const char* kMetricsHeader = "step,total,mpcl,sub,tau,lr,grad_norm";
std::string format_metrics(const StepMetrics& m);

inline constexpr std::size_t kHistoryCapacity = 100;

template <class T>
struct RunState {
  TrainConfig config;
  Tokenizer tokenizer;
  DualEncoder<T> model;
  ParamVector<T> adam_m;
  ParamVector<T> adam_v;
  long step = 0;  // completed optimizer steps
  std::deque<double> history;  // most recent totals, at most kHistoryCapacity

  RunState(TrainConfig cfg, Tokenizer tok, EncoderConfig enc);
};

// Loss value, per-parameter gradient and batch outputs for one batch.
template <class T>
struct BatchObjective {
  TotalLossOutput<T> loss;
  ParamVector<T> grad;  // d loss / d params, including the logit scale
  T tau = 0;
};

// Forward and backward through both towers. text_index maps each of the N*K
// sub-caption slots (row-major by image) to a row of unique_texts.
template <class T>
BatchObjective<T> batch_objective(const DualEncoder<T>& model,
                                  std::span<const Tensor* const> images,
                                  std::span<const TokenIds* const> unique_texts,
                                  std::span<const int> text_index, int k, T sigma,
                                  const LossWeights& weights, GroupingNegatives negatives);

template <class T>
class Trainer {
 public:
  Trainer(const Corpus& corpus, RunState<T> state);
  // Fresh run: tokenizer from the corpus, parameters from the seed.
  static Trainer create(const Corpus& corpus, const TrainConfig& cfg);

  long steps_per_epoch() const;
  long total_steps() const;

  // Image indices and sampled candidate indices used by optimizer step `step`.
  std::vector<std::size_t> batch_images(long step) const;
  std::vector<std::vector<std::size_t>> batch_samples(long step,
                                                      std::span<const std::size_t> images) const;

  // One optimizer step at the current state.step. Throws NonFiniteLoss.
  StepMetrics train_step();

  // Runs until state.step == total_steps() or max_steps more steps.
  void run(const std::function<void(const StepMetrics&)>& on_step, long max_steps = -1);

  const RunState<T>& state() const { return state_; }
  RunState<T>& state() { return state_; }
  const std::vector<SubCaptionSet>& subcaption_sets() const { return sets_; }

 private:
  const Corpus& corpus_;
  RunState<T> state_;
  std::vector<SubCaptionSet> sets_;
  std::vector<std::vector<TokenIds>> tokens_;  // [image][candidate]
};

extern template class Trainer<float>;
extern template class Trainer<double>;

// Checkpoint layout (little-endian):
//   "DLIP" | u32 version | u32 n + n bytes config text | 12 x i64 encoder
//   shape | u32 vocab count, then per word u32 n + n bytes |
//   u32 scalar bytes (4 or 8) | u64 step |
//   u64 param count P | P params | P first moments | P second moments |
//   u32 history count H | H f64 totals | u32 CRC-32 of all preceding bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const RunState<T>& state, const std::filesystem::path& path);
template <class T>
RunState<T> load_checkpoint(const std::filesystem::path& path);
// Scalar width stored in a checkpoint (4 or 8); validates the header.
int checkpoint_scalar_bytes(const std::filesystem::path& path);

}  // namespace dlip
