#pragma once

// Sentence-level context retrieval over a subject-partitioned textbook
// corpus: Okapi BM25, cosine similarity over pluggable embeddings, and
// reciprocal rank fusion, plus P@K / R@K evaluation.

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vimc/data.hpp"

namespace vimc::retrieval {

struct SentenceUnit {
  int id = 0;
  Subject subject = Subject::Literature;
  std::string text;
  TokenSequence tokens;
};

/// Splits a document into sentences ending in '.', '!' or '?' (a run of
/// terminators followed by whitespace or end of text closes a sentence).
/// Trailing text without a terminator forms a final unit. Unit ids are
/// assigned consecutively from `first_id`; token ids come from `vocab` when
/// given, otherwise every id is UNK.
std::vector<SentenceUnit> segment_corpus(std::string_view document, Subject subject, int first_id = 0,
                                         const Vocabulary* vocab = nullptr);

/// Corpus file: one JSON object per line, {"id": int, "subject": str, "text": str}.
std::vector<SentenceUnit> load_corpus(const std::string& path);
void write_corpus(const std::string& path, const std::vector<SentenceUnit>& units);

struct ScoredUnit {
  int unit_id = 0;
  double score = 0.0;
  bool operator==(const ScoredUnit&) const = default;
};

/// Descending score; equal scores ordered by ascending unit id.
struct RankedList {
  std::vector<ScoredUnit> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::vector<int> ids() const;
  bool operator==(const RankedList&) const = default;
};

/// Sorts by (score desc, id asc) and truncates to K when K > 0.
RankedList make_ranked(std::vector<ScoredUnit> scored, std::size_t k = 0);

/// Unique query terms of the question followed by its four options.
std::vector<std::string> sparse_query_terms(const std::string& question, const std::array<std::string, 4>& options,
                                            const Tokenizer& tok = default_tokenizer());

// ---------------------------------------------------------------- sparse

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// BM25 statistics for a single subject partition.
class Bm25Partition {
 public:
  Bm25Partition() = default;
  Bm25Partition(const std::vector<const SentenceUnit*>& units, Bm25Params params);

  double score(const std::vector<std::string>& query_terms, int unit_id) const;
  double idf(const std::string& term) const;
  std::size_t doc_freq(const std::string& term) const;
  std::size_t num_units() const { return unit_ids_.size(); }
  double avg_length() const { return avg_length_; }
  const std::vector<int>& unit_ids() const { return unit_ids_; }
  bool contains(int unit_id) const { return slot_.count(unit_id) > 0; }

 private:
  Bm25Params params_;
  std::vector<int> unit_ids_;
  std::unordered_map<int, std::size_t> slot_;
  std::vector<std::unordered_map<std::string, int>> term_freq_;
  std::vector<double> length_;
  std::unordered_map<std::string, std::size_t> doc_freq_;
  double avg_length_ = 0.0;
};

class SparseIndex {
 public:
  SparseIndex(const std::vector<SentenceUnit>& units, Bm25Params params = {});

  /// Okapi BM25 with idf = ln((N - df + 0.5) / (df + 0.5) + 1), summed over
  /// unique query terms, computed within the unit's subject partition.
  double bm25_score(const std::vector<std::string>& query_terms, int unit_id) const;
  RankedList retrieve_topk(const std::vector<std::string>& query_terms, std::size_t k, Subject subject) const;
  const Bm25Partition& partition(Subject s) const;
  Subject subject_of(int unit_id) const;

 private:
  std::map<Subject, Bm25Partition> partitions_;
  std::unordered_map<int, Subject> subject_of_;
};

// ----------------------------------------------------------------- dense

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dimension() const = 0;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

/// Deterministic toy embedder: signed feature hashing of tokens into
/// `dimension` buckets, L2-normalized. Empty text maps to the zero vector.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(int dimension = 64, std::uint64_t seed = 0x5eed);
  int dimension() const override { return dimension_; }
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  int dimension_;
  std::uint64_t seed_;
};

/// Embeddings looked up by exact text, e.g. produced by an external model.
class TableEmbedder final : public Embedder {
 public:
  TableEmbedder(int dimension, std::unordered_map<std::string, Eigen::VectorXd> table);
  int dimension() const override { return dimension_; }
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  int dimension_;
  std::unordered_map<std::string, Eigen::VectorXd> table_;
};

/// Arithmetic mean of the question embedding and the four option embeddings.
Eigen::VectorXd dense_query_vector(const std::string& question, const std::array<std::string, 4>& options,
                                   const Embedder& embedder, const std::string& query_id = {});

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

class DenseIndex {
 public:
  DenseIndex(const std::vector<SentenceUnit>& units, const Embedder& embedder);
  /// Precomputed vectors keyed by unit id; every unit must have one.
  DenseIndex(const std::vector<SentenceUnit>& units, const std::unordered_map<int, Eigen::VectorXd>& vectors);

  RankedList retrieve_topk(const Eigen::VectorXd& query, std::size_t k, Subject subject) const;
  int dimension() const { return dimension_; }

 private:
  int dimension_ = 0;
  std::map<Subject, std::vector<std::pair<int, Eigen::VectorXd>>> partitions_;
};

/// Precomputed-embedding file: one JSON object per line, {"id": int, "vector": [reals]}.
std::unordered_map<int, Eigen::VectorXd> load_embeddings(const std::string& path);
void write_embeddings(const std::string& path, const std::unordered_map<int, Eigen::VectorXd>& vectors);

// ---------------------------------------------------------------- fusion

/// Fused score of a unit = sum over lists containing it of 1 / (k_rrf + rank),
/// ranks starting at 1. Per-unit contributions are summed in ascending order
/// so the result does not depend on the order of `lists`.
RankedList rrf_fuse(const std::vector<RankedList>& lists, int k_rrf = 60);

// ------------------------------------------------------------ evaluation

struct RetrievalJudgment {
  std::string query_id;
  std::set<int> relevant;
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t hits = 0;
};

/// P@K = hits / K, R@K = hits / |relevant|. nullopt when `relevant` is
/// empty (the query cannot be evaluated).
std::optional<PrecisionRecall> retrieval_metrics(const RankedList& results, const RetrievalJudgment& judgment,
                                                 std::size_t k);

struct ContextResult {
  std::string text;
  std::size_t tokens = 0;
  bool empty = false;
};

/// Top-K unit texts in rank order, joined by spaces and cut to `cap` tokens.
ContextResult build_context(const RankedList& results, const std::unordered_map<int, const SentenceUnit*>& units,
                            std::size_t k = 15, int cap = 400, const Tokenizer& tok = default_tokenizer());

// --------------------------------------------------------------- harness

enum class Mode { Sparse, Dense, Rrf };
Mode parse_mode(std::string_view s);
std::string_view to_string(Mode m);

struct Query {
  std::string id;
  Subject subject = Subject::Literature;
  std::string question;
  std::array<std::string, 4> options;
};

Query query_of(const McqItem& item);

/// Sparse, dense and fused retrieval over one corpus.
class Retriever {
 public:
  Retriever(std::vector<SentenceUnit> units, std::shared_ptr<const Embedder> embedder, Bm25Params params = {},
            int k_rrf = 60);

  RankedList retrieve(const Query& q, std::size_t k, Mode mode) const;
  /// Fills item.context with the top-K context built from `mode` results.
  ContextResult attach_context(McqItem& item, std::size_t k, int cap, Mode mode) const;

  const std::vector<SentenceUnit>& units() const { return units_; }
  const std::unordered_map<int, const SentenceUnit*>& unit_lookup() const { return lookup_; }

 private:
  std::vector<SentenceUnit> units_;
  std::unordered_map<int, const SentenceUnit*> lookup_;
  std::shared_ptr<const Embedder> embedder_;
  SparseIndex sparse_;
  DenseIndex dense_;
  int k_rrf_;
};

/// Judgment file: one JSON object per line, {"id": str, "relevant": [unit ids]}.
std::vector<RetrievalJudgment> load_judgments(const std::string& path);

struct EvalCell {
  double precision = 0.0;  // mean over evaluable queries
  double recall = 0.0;
};

struct RetrievalReport {
  std::vector<std::size_t> ks;
  std::vector<Mode> modes;
  std::map<std::pair<Mode, std::size_t>, EvalCell> cells;
  std::size_t evaluated = 0;
  std::vector<std::string> flagged;  // queries without relevant units or without a judgment
  /// Per query, mode and K: whether hits == P@K*K == R@K*|relevant|.
  bool consistent = true;

  /// Retriever | P@K R@K ... table with values in percent.
  std::string table() const;
};

RetrievalReport evaluate_retrieval(const Retriever& retriever, const std::vector<Query>& queries,
                                   const std::vector<RetrievalJudgment>& judgments, const std::vector<std::size_t>& ks);

}  // namespace vimc::retrieval
