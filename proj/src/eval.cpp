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

#include "qpriv/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "qpriv/text.hpp"

namespace qpriv::eval {

void RetrievalIndex::validate() const {
  check(vectors.rows() == static_cast<Index>(doc_ids.size()), "index: row count differs from doc ids");
  for (Index i = 0; i < vectors.rows(); ++i)
    check(std::abs(vectors.row(i).norm() - 1.0) <= 1e-6, "index: row is not unit norm");
}

RetrievalIndex make_index(const std::vector<std::string>& doc_ids, const Matrix& vectors) {
  check(!doc_ids.empty(), "index: no documents");
  check(vectors.rows() == static_cast<Index>(doc_ids.size()), "index: row count differs from doc ids");
  std::unordered_set<std::string> seen;
  std::vector<Index> keep;
  RetrievalIndex index;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    if (!seen.insert(doc_ids[i]).second) continue;
    keep.push_back(static_cast<Index>(i));
    index.doc_ids.push_back(doc_ids[i]);
  }
  index.vectors = vectors(keep, Eigen::all);
  index.validate();
  return index;
}

RetrievalIndex build_index(const retriever::EncoderModel& encoder, const Tokenizer& tok,
                           const Corpus& docs) {
  check(!docs.empty(), "build_index: no documents");
  std::unordered_set<std::string> seen;
  std::vector<std::string> ids, texts;
  for (const auto& e : docs.examples) {
    if (!seen.insert(e.doc_id).second) continue;
    ids.push_back(e.doc_id);
    texts.push_back(e.document);
  }
  return make_index(ids, retriever::encode_texts(encoder, tok, texts));
}

std::vector<SearchHit> search(const RetrievalIndex& index, const RowVector& query, std::size_t k) {
  check(k >= 1, "search: k must be >= 1");
  check(query.size() == index.vectors.cols(), "search: query dimension mismatch");
  const Vector scores = index.vectors * query.transpose();
  std::vector<std::size_t> order(index.doc_ids.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n = std::min(k, order.size());
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.doc_ids[a] < index.doc_ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), before);
  std::vector<SearchHit> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) hits.push_back({index.doc_ids[order[i]], scores[order[i]]});
  return hits;
}

std::size_t rank_of(const RetrievalIndex& index, const RowVector& query, const std::string& positive) {
  const auto it = std::find(index.doc_ids.begin(), index.doc_ids.end(), positive);
  check(it != index.doc_ids.end(), "rank_of: positive document not in index");
  const Vector scores = index.vectors * query.transpose();
  const std::size_t p = static_cast<std::size_t>(it - index.doc_ids.begin());
  std::size_t rank = 1;
  for (std::size_t i = 0; i < index.doc_ids.size(); ++i) {
    if (i == p) continue;
    if (scores[i] > scores[p] || (scores[i] == scores[p] && index.doc_ids[i] < positive)) ++rank;
  }
  return rank;
}

double ndcg_at_k(std::optional<std::size_t> rank, std::size_t k) {
  if (!rank || *rank == 0 || *rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

double recall_at_k(std::optional<std::size_t> rank, std::size_t k) {
  return rank && *rank >= 1 && *rank <= k ? 1.0 : 0.0;
}

double mean_recall_at_k(const std::vector<std::size_t>& ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t r : ranks) s += recall_at_k(r, k);
  return s / static_cast<double>(ranks.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++out[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

}  // namespace

double bleu(const std::vector<std::string>& references, const std::vector<std::string>& hypotheses) {
  check(references.size() == hypotheses.size(), "bleu: references and hypotheses differ in count");
  constexpr std::size_t kMaxOrder = 4;
  std::array<double, kMaxOrder> matched{}, total{};
  double ref_len = 0.0, hyp_len = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto ref = tokenize_words(references[i]);
    const auto hyp = tokenize_words(hypotheses[i]);
    ref_len += static_cast<double>(ref.size());
    hyp_len += static_cast<double>(hyp.size());
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto r = ngrams(ref, n);
      for (const auto& [gram, count] : ngrams(hyp, n)) {
        const auto it = r.find(gram);
        matched[n - 1] += static_cast<double>(std::min(count, it == r.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (matched[0] == 0.0) return 0.0;
  double log_p = std::log(matched[0] / total[0]);
  for (std::size_t n = 1; n < kMaxOrder; ++n) log_p += std::log((matched[n] + 1.0) / (total[n] + 1.0));
  const double bp = hyp_len <= ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_p / static_cast<double>(kMaxOrder));
}

std::string EvalReport::ranks_csv() const {
  std::ostringstream out;
  out << "query_id,rank\n";
  for (std::size_t i = 0; i < ranks.size(); ++i) out << query_ids[i] << ',' << ranks[i] << '\n';
  return out.str();
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"k", r.k},
                             {"ndcg_at_k", r.ndcg},
                             {"recall_at_k", r.recall},
                             {"n_queries", r.n_queries},
                             {"query_ids", r.query_ids},
                             {"ranks", r.ranks}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.k = j.at("k").get<std::size_t>();
  r.ndcg = j.at("ndcg_at_k").get<double>();
  r.recall = j.at("recall_at_k").get<double>();
  r.n_queries = j.at("n_queries").get<std::size_t>();
  r.query_ids = j.at("query_ids").get<std::vector<std::string>>();
  r.ranks = j.at("ranks").get<std::vector<std::size_t>>();
}

EvalReport evaluate_embeddings(const RetrievalIndex& index, const Matrix& query_vectors,
                               const std::vector<std::string>& query_ids,
                               const std::vector<std::string>& positives, std::size_t k) {
  check(k >= 1, "evaluate: k must be >= 1");
  check(query_vectors.rows() == static_cast<Index>(positives.size()) &&
            query_ids.size() == positives.size(),
        "evaluate: query count mismatch");
  EvalReport report;
  report.k = k;
  report.n_queries = positives.size();
  report.query_ids = query_ids;
  double ndcg = 0.0, recall = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const std::size_t r = rank_of(index, query_vectors.row(static_cast<Index>(i)), positives[i]);
    report.ranks.push_back(r);
    ndcg += ndcg_at_k(r, k);
    recall += recall_at_k(r, k);
  }
  if (report.n_queries > 0) {
    report.ndcg = ndcg / static_cast<double>(report.n_queries);
    report.recall = recall / static_cast<double>(report.n_queries);
  }
  return report;
}

EvalReport evaluate_retrieval(const retriever::EncoderModel& encoder, const Tokenizer& tok,
                              const Corpus& eval_corpus, std::size_t k) {
  const RetrievalIndex index = build_index(encoder, tok, eval_corpus);
  std::vector<std::string> ids, texts, positives;
  for (const auto& e : eval_corpus.examples) {
    ids.push_back(e.query_id);
    texts.push_back(e.query);
    positives.push_back(e.doc_id);
  }
  return evaluate_embeddings(index, retriever::encode_texts(encoder, tok, texts), ids, positives, k);
}

}  // namespace qpriv::eval
