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

#include "dlip/experiment.hpp"

namespace dlip {

std::vector<std::string> retrieval_queries(const Corpus& corpus) {
  std::vector<std::string> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    std::string q;
    if (!r.long_captions.empty() && !r.long_captions.front().empty()) {
      for (const auto& s : r.long_captions.front()) {
        if (!q.empty()) q += ' ';
        q += s;
      }
    } else if (!r.short_captions.empty()) {
      q = r.short_captions.front();
    } else {
      q = r.raw_caption;
    }
    out.push_back(std::move(q));
  }
  return out;
}

template <class T>
RetrievalResult evaluate_retrieval(const DualEncoder<T>& model, const Tokenizer& tok,
                                   const Corpus& eval) {
  const Mat<double> images = encode_images(model, std::span<const Tensor>(eval.images));
  const auto queries = retrieval_queries(eval);
  const Mat<double> texts = encode_texts(model, tok, std::span<const std::string>(queries));
  MatchPairs gt;
  for (int i = 0; i < static_cast<int>(eval.records.size()); ++i) gt.emplace_back(i, i);
  return retrieval(images, texts, gt);
}

namespace {

template <class T>
CellResult run_cell(const Corpus& train, const Corpus& eval, const TrainConfig& cfg,
                    const std::function<void(const StepMetrics&)>& on_step) {
  auto trainer = Trainer<T>::create(train, cfg);
  CellResult out;
  trainer.run([&](const StepMetrics& m) {
    out.final_loss = m.total;
    if (on_step) on_step(m);
  });
  out.steps = trainer.state().step;
  out.retrieval = evaluate_retrieval(trainer.state().model, trainer.state().tokenizer, eval);
  return out;
}

}  // namespace

CellResult train_and_evaluate(const Corpus& train, const Corpus& eval, const TrainConfig& cfg,
                              const std::function<void(const StepMetrics&)>& on_step) {
  return cfg.numeric_mode == NumericMode::kF32 ? run_cell<float>(train, eval, cfg, on_step)
                                               : run_cell<double>(train, eval, cfg, on_step);
}

double mean_recall(const RetrievalResult& r) {
  double sum = 0;
  for (const auto& [k, v] : r.text_to_image) sum += v;
  for (const auto& [k, v] : r.image_to_text) sum += v;
  return sum / static_cast<double>(r.text_to_image.size() + r.image_to_text.size());
}

template RetrievalResult evaluate_retrieval<float>(const DualEncoder<float>&, const Tokenizer&,
                                                   const Corpus&);
template RetrievalResult evaluate_retrieval<double>(const DualEncoder<double>&, const Tokenizer&,
                                                    const Corpus&);

}  // namespace dlip
