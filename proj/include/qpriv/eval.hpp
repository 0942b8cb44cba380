/*
 * Copyright 2026 The qpriv Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#ifndef QPRIV_EVAL_HPP_
#define QPRIV_EVAL_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/dataset.hpp"
#include "qpriv/retriever.hpp"
#include "qpriv/tokenizer.hpp"
#include "qpriv/types.hpp"

namespace qpriv::eval {

struct RetrievalIndex {
  std::vector<std::string> doc_ids;
  Matrix vectors;  // one unit-norm row per doc id

  void validate() const;
};

// Rows must already be unit norm. Duplicate ids keep their first row.
RetrievalIndex make_index(const std::vector<std::string>& doc_ids, const Matrix& vectors);
RetrievalIndex build_index(const retriever::EncoderModel& encoder, const Tokenizer& tok,
                           const Corpus& docs);

struct SearchHit {
  std::string doc_id;
  Scalar score;

  bool operator==(const SearchHit&) const = default;
};

// Exact top-k by inner product, descending; equal scores are ordered by
// doc_id. k larger than the index returns every document.
std::vector<SearchHit> search(const RetrievalIndex& index, const RowVector& query, std::size_t k);

// 1 + number of documents that would be listed before `positive` by search.
std::size_t rank_of(const RetrievalIndex& index, const RowVector& query, const std::string& positive);

// Binary single-positive reductions; an absent positive scores 0.
double ndcg_at_k(std::optional<std::size_t> rank, std::size_t k = 10);
double recall_at_k(std::optional<std::size_t> rank, std::size_t k = 10);
double mean_recall_at_k(const std::vector<std::size_t>& ranks, std::size_t k = 10);

// Corpus BLEU over word tokens, orders 1-4 with uniform weights. Precisions
// of order >= 2 get add-one smoothing on numerator and denominator; a zero
// unigram precision gives 0.
double bleu(const std::vector<std::string>& references, const std::vector<std::string>& hypotheses);

struct EvalReport {
  std::size_t k = 10;
  double ndcg = 0.0;
  double recall = 0.0;
  std::size_t n_queries = 0;
  std::vector<std::string> query_ids;
  std::vector<std::size_t> ranks;

  std::string ranks_csv() const;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

// Ranks each query's positive against the index built from the same
// examples' documents.
EvalReport evaluate_embeddings(const RetrievalIndex& index, const Matrix& query_vectors,
                               const std::vector<std::string>& query_ids,
                               const std::vector<std::string>& positives, std::size_t k = 10);
EvalReport evaluate_retrieval(const retriever::EncoderModel& encoder, const Tokenizer& tok,
                              const Corpus& eval_corpus, std::size_t k = 10);

}  // namespace qpriv::eval

#endif  // QPRIV_EVAL_HPP_
