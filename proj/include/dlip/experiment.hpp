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

#include <functional>
#include <string>
#include <vector>

#include "dlip/corpus.hpp"
#include "dlip/eval.hpp"
#include "dlip/trainer.hpp"

namespace dlip {

// Retrieval text for each record: the sentences of its first long caption
// joined by spaces, else its first short caption, else its raw caption.
std::vector<std::string> retrieval_queries(const Corpus& corpus);

// Image i matches query i.
template <class T>
RetrievalResult evaluate_retrieval(const DualEncoder<T>& model, const Tokenizer& tok,
                                   const Corpus& eval);

struct CellResult {
  RetrievalResult retrieval;
  double final_loss = 0;
  long steps = 0;
};

// Trains a fresh model on `train` in the configured numeric mode and scores
// text/image retrieval on `eval`.
CellResult train_and_evaluate(const Corpus& train, const Corpus& eval, const TrainConfig& cfg,
                              const std::function<void(const StepMetrics&)>& on_step = {});

// Mean of text->image and image->text recall over K in {1, 5, 10}.
double mean_recall(const RetrievalResult& r);

}  // namespace dlip
