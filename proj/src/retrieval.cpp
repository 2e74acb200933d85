#include "vimc/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace vimc::retrieval {

using nlohmann::json;

namespace {

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

TokenSequence tokens_of(const std::string& text, const Vocabulary* vocab) {
  if (vocab) return tokenize(text, *vocab);
  TokenSequence seq;
  seq.surface = default_tokenizer().split(text);
  seq.ids.assign(seq.surface.size(), kUnk);
  return seq;
}

}  // namespace

std::vector<SentenceUnit> segment_corpus(std::string_view document, Subject subject, int first_id,
                                         const Vocabulary* vocab) {
  std::vector<SentenceUnit> units;
  auto emit = [&](std::string_view piece) {
    std::string text = trim(piece);
    if (text.empty()) return;
    SentenceUnit u;
    u.id = first_id + static_cast<int>(units.size());
    u.subject = subject;
    u.tokens = tokens_of(text, vocab);
    u.text = std::move(text);
    units.push_back(std::move(u));
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < document.size()) {
    if (!is_terminator(document[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < document.size() && is_terminator(document[j])) ++j;
    if (j == document.size() || std::isspace(static_cast<unsigned char>(document[j]))) {
      emit(document.substr(start, j - start));
      start = j;
    }
    i = j;
  }
  emit(document.substr(start));
  return units;
}

std::vector<SentenceUnit> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<SentenceUnit> units;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      SentenceUnit u;
      u.id = j.at("id").get<int>();
      u.subject = parse_subject(j.at("subject").get<std::string>());
      u.text = j.at("text").get<std::string>();
      if (trim(u.text).empty()) throw std::invalid_argument("empty text");
      u.tokens = tokens_of(u.text, nullptr);
      units.push_back(std::move(u));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return units;
}

void write_corpus(const std::string& path, const std::vector<SentenceUnit>& units) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& u : units) {
    json j{{"id", u.id}, {"subject", std::string(to_string(u.subject))}, {"text", u.text}};
    out << j.dump() << '\n';
  }
}

std::vector<int> RankedList::ids() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.unit_id);
  return out;
}

RankedList make_ranked(std::vector<ScoredUnit> scored, std::size_t k) {
  std::sort(scored.begin(), scored.end(), [](const ScoredUnit& a, const ScoredUnit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.unit_id < b.unit_id;
  });
  if (k > 0 && scored.size() > k) scored.resize(k);
  return RankedList{std::move(scored)};
}

std::vector<std::string> sparse_query_terms(const std::string& question, const std::array<std::string, 4>& options,
                                            const Tokenizer& tok) {
  std::vector<std::string> terms;
  std::set<std::string> seen;
  auto absorb = [&](const std::string& text) {
    for (auto& t : tok.split(text)) {
      if (seen.insert(t).second) terms.push_back(std::move(t));
    }
  };
  absorb(question);
  for (const auto& o : options) absorb(o);
  return terms;
}

// ---------------------------------------------------------------- sparse

Bm25Partition::Bm25Partition(const std::vector<const SentenceUnit*>& units, Bm25Params params) : params_(params) {
  double total = 0.0;
  for (const SentenceUnit* u : units) {
    slot_.emplace(u->id, unit_ids_.size());
    unit_ids_.push_back(u->id);
    // units built by hand may carry only their text
    const auto terms = u->tokens.surface.empty() ? default_tokenizer().split(u->text) : u->tokens.surface;
    std::unordered_map<std::string, int> tf;
    for (const auto& t : terms) ++tf[t];
    for (const auto& [term, count] : tf) ++doc_freq_[term];
    term_freq_.push_back(std::move(tf));
    length_.push_back(static_cast<double>(terms.size()));
    total += static_cast<double>(terms.size());
  }
  avg_length_ = units.empty() ? 0.0 : total / static_cast<double>(units.size());
}

std::size_t Bm25Partition::doc_freq(const std::string& term) const {
  auto it = doc_freq_.find(term);
  return it == doc_freq_.end() ? 0 : it->second;
}

double Bm25Partition::idf(const std::string& term) const {
  const auto n = static_cast<double>(unit_ids_.size());
  const auto df = static_cast<double>(doc_freq(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Partition::score(const std::vector<std::string>& query_terms, int unit_id) const {
  auto it = slot_.find(unit_id);
  if (it == slot_.end()) throw std::out_of_range("bm25: unknown unit id " + std::to_string(unit_id));
  const auto& tf = term_freq_[it->second];
  const double len = length_[it->second];
  const double norm = avg_length_ > 0.0 ? len / avg_length_ : 0.0;
  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& term : query_terms) {
    if (!seen.insert(term).second) continue;
    auto f = tf.find(term);
    if (f == tf.end()) continue;
    const double freq = f->second;
    const double tf_part = freq * (params_.k1 + 1.0) / (freq + params_.k1 * (1.0 - params_.b + params_.b * norm));
    total += idf(term) * tf_part;
  }
  return total;
}

SparseIndex::SparseIndex(const std::vector<SentenceUnit>& units, Bm25Params params) {
  std::map<Subject, std::vector<const SentenceUnit*>> grouped;
  for (const auto& u : units) {
    if (!subject_of_.emplace(u.id, u.subject).second) {
      throw std::invalid_argument("duplicate unit id " + std::to_string(u.id));
    }
    grouped[u.subject].push_back(&u);
  }
  for (Subject s : kAllSubjects) partitions_.emplace(s, Bm25Partition(grouped[s], params));
}

Subject SparseIndex::subject_of(int unit_id) const {
  auto it = subject_of_.find(unit_id);
  if (it == subject_of_.end()) throw std::out_of_range("bm25: unknown unit id " + std::to_string(unit_id));
  return it->second;
}

const Bm25Partition& SparseIndex::partition(Subject s) const { return partitions_.at(s); }

double SparseIndex::bm25_score(const std::vector<std::string>& query_terms, int unit_id) const {
  return partition(subject_of(unit_id)).score(query_terms, unit_id);
}

RankedList SparseIndex::retrieve_topk(const std::vector<std::string>& query_terms, std::size_t k,
                                      Subject subject) const {
  if (k < 1) throw std::invalid_argument("retrieve_topk: K must be >= 1");
  const auto& part = partition(subject);
  std::vector<ScoredUnit> scored;
  scored.reserve(part.num_units());
  for (int id : part.unit_ids()) scored.push_back({id, part.score(query_terms, id)});
  return make_ranked(std::move(scored), k);
}

// ----------------------------------------------------------------- dense

HashingEmbedder::HashingEmbedder(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension < 1) throw std::invalid_argument("embedder dimension must be positive");
}

Eigen::VectorXd HashingEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dimension_);
  for (const auto& tok : default_tokenizer().split(text)) {
    std::uint64_t h = 1469598103934665603ULL ^ seed_;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= h >> 29;
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dimension_));
    v(bucket) += ((h >> 63) & 1U) ? -1.0 : 1.0;
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

TableEmbedder::TableEmbedder(int dimension, std::unordered_map<std::string, Eigen::VectorXd> table)
    : dimension_(dimension), table_(std::move(table)) {
  for (const auto& [text, vec] : table_) {
    if (vec.size() != dimension_) throw std::invalid_argument("embedding table: wrong dimension for '" + text + "'");
  }
}

Eigen::VectorXd TableEmbedder::embed(std::string_view text) const {
  auto it = table_.find(std::string(text));
  if (it == table_.end()) throw std::runtime_error("no precomputed embedding for text '" + std::string(text) + "'");
  return it->second;
}

Eigen::VectorXd dense_query_vector(const std::string& question, const std::array<std::string, 4>& options,
                                   const Embedder& embedder, const std::string& query_id) {
  try {
    Eigen::VectorXd acc = embedder.embed(question);
    for (const auto& o : options) acc += embedder.embed(o);
    return acc / 5.0;
  } catch (const std::exception& e) {
    throw std::runtime_error("embedding failed for query '" + query_id + "': " + e.what());
  }
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

DenseIndex::DenseIndex(const std::vector<SentenceUnit>& units, const Embedder& embedder)
    : dimension_(embedder.dimension()) {
  for (const auto& u : units) partitions_[u.subject].emplace_back(u.id, embedder.embed(u.text));
}

DenseIndex::DenseIndex(const std::vector<SentenceUnit>& units, const std::unordered_map<int, Eigen::VectorXd>& vectors) {
  for (const auto& u : units) {
    auto it = vectors.find(u.id);
    if (it == vectors.end()) throw std::invalid_argument("no vector for unit " + std::to_string(u.id));
    if (dimension_ == 0) dimension_ = static_cast<int>(it->second.size());
    if (it->second.size() != dimension_) throw std::invalid_argument("inconsistent embedding dimension");
    partitions_[u.subject].emplace_back(u.id, it->second);
  }
}

RankedList DenseIndex::retrieve_topk(const Eigen::VectorXd& query, std::size_t k, Subject subject) const {
  if (k < 1) throw std::invalid_argument("retrieve_topk: K must be >= 1");
  auto it = partitions_.find(subject);
  if (it == partitions_.end()) return {};
  std::vector<ScoredUnit> scored;
  scored.reserve(it->second.size());
  for (const auto& [id, vec] : it->second) scored.push_back({id, cosine(query, vec)});
  return make_ranked(std::move(scored), k);
}

std::unordered_map<int, Eigen::VectorXd> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  std::unordered_map<int, Eigen::VectorXd> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    auto values = j.at("vector").get<std::vector<double>>();
    out[j.at("id").get<int>()] = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return out;
}

void write_embeddings(const std::string& path, const std::unordered_map<int, Eigen::VectorXd>& vectors) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write embedding file: " + path);
  std::vector<int> ids;
  for (const auto& [id, v] : vectors) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    const auto& v = vectors.at(id);
    json j{{"id", id}, {"vector", std::vector<double>(v.data(), v.data() + v.size())}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------- fusion

RankedList rrf_fuse(const std::vector<RankedList>& lists, int k_rrf) {
  if (lists.size() < 2) throw std::invalid_argument("rrf_fuse: need at least two ranked lists");
  if (k_rrf < 1) throw std::invalid_argument("rrf_fuse: k_rrf must be >= 1");
  std::map<int, std::vector<double>> contributions;
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      contributions[list.entries[r].unit_id].push_back(1.0 / (static_cast<double>(k_rrf) + static_cast<double>(r + 1)));
    }
  }
  std::vector<ScoredUnit> fused;
  fused.reserve(contributions.size());
  for (auto& [id, parts] : contributions) {
    std::sort(parts.begin(), parts.end());
    double s = 0.0;
    for (double p : parts) s += p;
    fused.push_back({id, s});
  }
  return make_ranked(std::move(fused));
}

// ------------------------------------------------------------ evaluation

std::optional<PrecisionRecall> retrieval_metrics(const RankedList& results, const RetrievalJudgment& judgment,
                                                 std::size_t k) {
  if (k < 1) throw std::invalid_argument("retrieval_metrics: K must be >= 1");
  if (judgment.relevant.empty()) return std::nullopt;
  PrecisionRecall pr;
  const std::size_t upto = std::min(k, results.entries.size());
  for (std::size_t i = 0; i < upto; ++i) {
    if (judgment.relevant.count(results.entries[i].unit_id)) ++pr.hits;
  }
  pr.precision = static_cast<double>(pr.hits) / static_cast<double>(k);
  pr.recall = static_cast<double>(pr.hits) / static_cast<double>(judgment.relevant.size());
  return pr;
}

ContextResult build_context(const RankedList& results, const std::unordered_map<int, const SentenceUnit*>& units,
                            std::size_t k, int cap, const Tokenizer& tok) {
  if (k < 1) throw std::invalid_argument("build_context: K must be >= 1");
  if (cap < 1) throw std::invalid_argument("build_context: cap must be >= 1");
  ContextResult out;
  if (results.empty()) {
    out.empty = true;
    return out;
  }
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < std::min(k, results.size()); ++i) {
    auto it = units.find(results.entries[i].unit_id);
    if (it == units.end()) throw std::out_of_range("build_context: unknown unit id");
    for (auto& t : tok.split(it->second->text)) {
      if (tokens.size() == static_cast<std::size_t>(cap)) break;
      tokens.push_back(std::move(t));
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.text += ' ';
    out.text += tokens[i];
  }
  out.tokens = tokens.size();
  out.empty = tokens.empty();
  return out;
}

// --------------------------------------------------------------- harness

Mode parse_mode(std::string_view s) {
  if (s == "sparse") return Mode::Sparse;
  if (s == "dense") return Mode::Dense;
  if (s == "rrf") return Mode::Rrf;
  throw std::invalid_argument("unknown retrieval mode: " + std::string(s));
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Sparse:
      return "sparse";
    case Mode::Dense:
      return "dense";
    case Mode::Rrf:
      return "rrf";
  }
  return "?";
}

Query query_of(const McqItem& item) { return {item.id, item.subject, item.question, item.options}; }

Retriever::Retriever(std::vector<SentenceUnit> units, std::shared_ptr<const Embedder> embedder, Bm25Params params,
                     int k_rrf)
    : units_(std::move(units)),
      embedder_(std::move(embedder)),
      sparse_(units_, params),
      dense_(units_, *embedder_),
      k_rrf_(k_rrf) {
  for (const auto& u : units_) lookup_.emplace(u.id, &u);
}

RankedList Retriever::retrieve(const Query& q, std::size_t k, Mode mode) const {
  auto sparse = [&] { return sparse_.retrieve_topk(sparse_query_terms(q.question, q.options), k, q.subject); };
  auto dense = [&] {
    return dense_.retrieve_topk(dense_query_vector(q.question, q.options, *embedder_, q.id), k, q.subject);
  };
  switch (mode) {
    case Mode::Sparse:
      return sparse();
    case Mode::Dense:
      return dense();
    case Mode::Rrf: {
      RankedList fused = rrf_fuse({sparse(), dense()}, k_rrf_);
      if (fused.entries.size() > k) fused.entries.resize(k);
      return fused;
    }
  }
  return {};
}

ContextResult Retriever::attach_context(McqItem& item, std::size_t k, int cap, Mode mode) const {
  ContextResult ctx = build_context(retrieve(query_of(item), k, mode), lookup_, k, cap);
  item.context = ctx.text;
  return ctx;
}

std::vector<RetrievalJudgment> load_judgments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open judgment file: " + path);
  std::vector<RetrievalJudgment> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    RetrievalJudgment r;
    r.query_id = j.at("id").get<std::string>();
    for (int id : j.at("relevant").get<std::vector<int>>()) r.relevant.insert(id);
    out.push_back(std::move(r));
  }
  return out;
}

std::string RetrievalReport::table() const {
  std::ostringstream os;
  char buf[64];
  os << "Retriever";
  for (std::size_t k : ks) os << " | P@" << k << " | R@" << k;
  os << '\n';
  for (Mode m : modes) {
    os << to_string(m);
    for (std::size_t k : ks) {
      const auto& c = cells.at({m, k});
      std::snprintf(buf, sizeof buf, " | %05.2f | %05.2f", 100.0 * c.precision, 100.0 * c.recall);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

RetrievalReport evaluate_retrieval(const Retriever& retriever, const std::vector<Query>& queries,
                                   const std::vector<RetrievalJudgment>& judgments, const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw std::invalid_argument("evaluate_retrieval: empty K list");
  RetrievalReport report;
  report.ks = ks;
  report.modes = {Mode::Sparse, Mode::Dense, Mode::Rrf};
  std::map<std::string, const RetrievalJudgment*> by_id;
  for (const auto& j : judgments) by_id[j.query_id] = &j;
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  std::map<std::pair<Mode, std::size_t>, EvalCell> sums;
  for (const auto& q : queries) {
    auto it = by_id.find(q.id);
    if (it == by_id.end() || it->second->relevant.empty()) {
      report.flagged.push_back(q.id);
      continue;
    }
    ++report.evaluated;
    for (Mode m : report.modes) {
      const RankedList results = retriever.retrieve(q, kmax, m);
      for (std::size_t k : ks) {
        const auto pr = *retrieval_metrics(results, *it->second, k);
        auto& cell = sums[{m, k}];
        cell.precision += pr.precision;
        cell.recall += pr.recall;
        const double via_p = pr.precision * static_cast<double>(k);
        const double via_r = pr.recall * static_cast<double>(it->second->relevant.size());
        if (std::abs(via_p - static_cast<double>(pr.hits)) > 1e-9 || std::abs(via_r - static_cast<double>(pr.hits)) > 1e-9) {
          report.consistent = false;
        }
      }
    }
  }
  const double denom = report.evaluated ? static_cast<double>(report.evaluated) : 1.0;
  for (Mode m : report.modes) {
    for (std::size_t k : ks) {
      auto cell = sums[{m, k}];
      report.cells[{m, k}] = {cell.precision / denom, cell.recall / denom};
    }
  }
  return report;
}

}  // namespace vimc::retrieval
