// vimc: command-line front end for data preparation, retrieval, training,
// evaluation and the verification utilities.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vimc/ablation.hpp"
#include "vimc/checkpoint.hpp"
#include "vimc/config.hpp"
#include "vimc/data.hpp"
#include "vimc/encoder.hpp"
#include "vimc/evaluate.hpp"
#include "vimc/gradcheck.hpp"
#include "vimc/retrieval.hpp"
#include "vimc/synth.hpp"
#include "vimc/train.hpp"

using namespace vimc;

namespace {

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const long v = std::stol(part);
    if (v < 1) throw std::invalid_argument("K values must be >= 1");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw std::invalid_argument("empty --k-list");
  return ks;
}

std::vector<retrieval::SentenceUnit> read_corpus_input(const std::string& path, const std::string& subject) {
  if (path.size() > 6 && path.ends_with(".jsonl")) return retrieval::load_corpus(path);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  if (subject.empty()) throw std::invalid_argument("--subject is required for plain-text documents");
  return retrieval::segment_corpus(ss.str(), parse_subject(subject));
}

retrieval::Retriever make_retriever(const std::string& corpus_path, int dim) {
  return retrieval::Retriever(retrieval::load_corpus(corpus_path), std::make_shared<retrieval::HashingEmbedder>(dim));
}

std::string format_matrix(const ag::Matrix& m) {
  std::ostringstream os;
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%s%.6f", j ? " " : "", m(i, j));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

void print_report(const MetricReport& r) { std::cout << r.table(); }

// ------------------------------------------------------------------ synth

void add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic dataset with attached contexts");
  auto n = std::make_shared<int>(0);
  auto seed = std::make_shared<std::uint64_t>(7);
  auto vocab = std::make_shared<int>(200);
  auto out = std::make_shared<std::string>("synth.jsonl");
  auto corpus = std::make_shared<std::string>();
  auto judgments = std::make_shared<std::string>();
  cmd->add_option("--n", *n, "Number of items")->required()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", *seed, "Random seed");
  cmd->add_option("--vocab-size", *vocab, "Content-word lexicon size");
  cmd->add_option("--out", *out, "Dataset output (JSONL)");
  cmd->add_option("--corpus-out", *corpus, "Also write each context as a corpus unit");
  cmd->add_option("--judgments-out", *judgments, "Also write item -> unit relevance judgments");
  cmd->callback([=] {
    const auto items = synth::synth_generate(*n, *seed, *vocab);
    write_dataset(*out, items);
    std::cout << "wrote " << items.size() << " items to " << *out << " (seed " << *seed << ")\n";
    if (!corpus->empty()) {
      std::vector<retrieval::SentenceUnit> units;
      for (std::size_t i = 0; i < items.size(); ++i) units.push_back({static_cast<int>(i), items[i].subject, *items[i].context, {}});
      retrieval::write_corpus(*corpus, units);
      std::cout << "wrote " << units.size() << " corpus units to " << *corpus << '\n';
    }
    if (!judgments->empty()) {
      std::ofstream j(*judgments);
      for (std::size_t i = 0; i < items.size(); ++i) j << "{\"id\": \"" << items[i].id << "\", \"relevant\": [" << i << "]}\n";
      std::cout << "wrote judgments to " << *judgments << '\n';
    }
  });
}

// ------------------------------------------------------------------- data

void add_data(CLI::App& app) {
  auto* data = app.add_subcommand("data", "Dataset utilities");
  data->require_subcommand(1);

  auto* validate_cmd = data->add_subcommand("validate", "Check every record of a dataset file");
  auto vpath = std::make_shared<std::string>();
  validate_cmd->add_option("path", *vpath)->required();
  validate_cmd->callback([=] {
    const auto items = load_dataset(*vpath);
    std::cout << "ok: " << items.size() << " valid items\n";
  });

  auto* shuffle_cmd = data->add_subcommand("shuffle", "Permute options to remove answer-position bias");
  auto spath = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto out = std::make_shared<std::string>();
  shuffle_cmd->add_option("path", *spath)->required();
  shuffle_cmd->add_option("--seed", *seed)->required();
  shuffle_cmd->add_option("--out", *out)->required();
  shuffle_cmd->callback([=] {
    const auto items = load_dataset(*spath);
    const auto shuffled = debias_shuffle(items, *seed);
    std::vector<McqItem> out_items;
    for (const auto& s : shuffled) out_items.push_back(s.item);
    write_dataset(*out, out_items);
    auto show = [](const char* label, const std::array<std::size_t, kNumOptions>& d) {
      std::cout << label;
      for (int k = 0; k < kNumOptions; ++k) std::cout << ' ' << static_cast<char>('A' + k) << '=' << d[static_cast<std::size_t>(k)];
      std::cout << '\n';
    };
    show("before:", option_distribution(items));
    show("after: ", option_distribution(out_items));
    std::cout << "shuffled " << out_items.size() << " items with seed " << *seed << " -> " << *out << '\n';
  });

  auto* stats_cmd = data->add_subcommand("stats", "Summarize a dataset file");
  auto tpath = std::make_shared<std::string>();
  stats_cmd->add_option("path", *tpath)->required();
  stats_cmd->callback([=] {
    const auto items = load_dataset(*tpath);
    std::map<std::string, std::size_t> subjects;
    std::map<int, std::size_t> grades;
    std::size_t with_expl = 0;
    std::size_t with_ctx = 0;
    double q_len = 0.0;
    double o_len = 0.0;
    double c_len = 0.0;
    const auto& tok = default_tokenizer();
    for (const auto& it : items) {
      ++subjects[std::string(to_string(it.subject))];
      ++grades[it.grade];
      with_expl += it.explanation ? 1 : 0;
      q_len += static_cast<double>(tok.split(it.question).size());
      for (const auto& o : it.options) o_len += static_cast<double>(tok.split(o).size());
      if (it.context) {
        ++with_ctx;
        c_len += static_cast<double>(tok.split(*it.context).size());
      }
    }
    const double n = items.empty() ? 1.0 : static_cast<double>(items.size());
    std::cout << "items: " << items.size() << '\n';
    for (const auto& [s, c] : subjects) std::cout << "subject " << s << ": " << c << '\n';
    for (const auto& [g, c] : grades) std::cout << "grade " << g << ": " << c << '\n';
    const auto dist = option_distribution(items);
    std::cout << "answers:";
    for (int k = 0; k < kNumOptions; ++k) std::cout << ' ' << static_cast<char>('A' + k) << '=' << dist[static_cast<std::size_t>(k)];
    std::cout << "\nwith explanation: " << with_expl << "\nwith context: " << with_ctx << '\n';
    std::printf("mean tokens: question %.1f, option %.1f, context %.1f\n", q_len / n, o_len / (4.0 * n),
                with_ctx ? c_len / static_cast<double>(with_ctx) : 0.0);
  });
}

// -------------------------------------------------------------- retrieve

void add_retrieve(CLI::App& app) {
  auto* r = app.add_subcommand("retrieve", "Sentence-unit retrieval");
  r->require_subcommand(1);

  auto* build = r->add_subcommand("build-index", "Segment documents into a corpus and embed its units");
  auto input = std::make_shared<std::string>();
  auto subject = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto emb = std::make_shared<std::string>();
  auto dim = std::make_shared<int>(64);
  build->add_option("--input", *input, "Corpus JSONL or a plain-text document")->required();
  build->add_option("--subject", *subject, "Subject of a plain-text document");
  build->add_option("--out", *out, "Write the corpus as JSONL");
  build->add_option("--embeddings", *emb, "Write toy-embedder vectors as JSONL");
  build->add_option("--dim", *dim, "Embedding dimension");
  build->callback([=] {
    const auto units = read_corpus_input(*input, *subject);
    retrieval::SparseIndex sparse(units);
    std::map<std::string, std::size_t> per_subject;
    for (const auto& u : units) ++per_subject[std::string(to_string(u.subject))];
    std::cout << "units: " << units.size() << '\n';
    for (const auto& [s, c] : per_subject) std::cout << "  " << s << ": " << c << '\n';
    if (!out->empty()) retrieval::write_corpus(*out, units);
    if (!emb->empty()) {
      retrieval::HashingEmbedder embedder(*dim);
      std::unordered_map<int, Eigen::VectorXd> vectors;
      for (const auto& u : units) vectors[u.id] = embedder.embed(u.text);
      retrieval::write_embeddings(*emb, vectors);
      std::cout << "wrote " << vectors.size() << " vectors of dimension " << *dim << '\n';
    }
  });

  auto* query = r->add_subcommand("query", "Retrieve top-K units for one question");
  auto qcorpus = std::make_shared<std::string>();
  auto k = std::make_shared<std::size_t>(15);
  auto mode = std::make_shared<std::string>("rrf");
  auto qsubject = std::make_shared<std::string>();
  auto question = std::make_shared<std::string>();
  auto options = std::make_shared<std::vector<std::string>>();
  auto dataset = std::make_shared<std::string>();
  auto item = std::make_shared<std::string>();
  auto qdim = std::make_shared<int>(64);
  query->add_option("--corpus", *qcorpus)->required();
  query->add_option("--k", *k);
  query->add_option("--mode", *mode, "sparse, dense or rrf");
  query->add_option("--subject", *qsubject);
  query->add_option("--question", *question);
  query->add_option("--option", *options, "Repeat four times");
  query->add_option("--dataset", *dataset, "Take the query from this dataset");
  query->add_option("--item", *item, "Item id within --dataset");
  query->add_option("--dim", *qdim);
  query->callback([=] {
    const auto retriever = make_retriever(*qcorpus, *qdim);
    retrieval::Query q;
    if (!dataset->empty()) {
      bool found = false;
      for (const auto& it : load_dataset(*dataset)) {
        if (it.id == *item) {
          q = retrieval::query_of(it);
          found = true;
        }
      }
      if (!found) throw std::invalid_argument("item '" + *item + "' not found in " + *dataset);
    } else {
      if (options->size() != 4) throw std::invalid_argument("--option must be given exactly four times");
      q.id = "query";
      q.question = *question;
      for (std::size_t i = 0; i < 4; ++i) q.options[i] = (*options)[i];
    }
    if (!qsubject->empty()) q.subject = parse_subject(*qsubject);
    const auto ranked = retriever.retrieve(q, *k, retrieval::parse_mode(*mode));
    const auto& lookup = retriever.unit_lookup();
    int rank = 0;
    for (const auto& s : ranked.entries) {
      std::printf("%2d  %5d  %.6f  %s\n", ++rank, s.unit_id, s.score, lookup.at(s.unit_id)->text.c_str());
    }
  });

  auto* eval = r->add_subcommand("eval", "P@K / R@K for sparse, dense and fused retrieval");
  auto ecorpus = std::make_shared<std::string>();
  auto queries = std::make_shared<std::string>();
  auto judgments = std::make_shared<std::string>();
  auto klist = std::make_shared<std::string>("10,15,20,30");
  auto edim = std::make_shared<int>(64);
  eval->add_option("--corpus", *ecorpus)->required();
  eval->add_option("--queries", *queries, "Dataset file providing the questions")->required();
  eval->add_option("--judgments", *judgments)->required();
  eval->add_option("--k-list", *klist);
  eval->add_option("--dim", *edim);
  eval->callback([=] {
    const auto retriever = make_retriever(*ecorpus, *edim);
    std::vector<retrieval::Query> qs;
    for (const auto& it : load_dataset(*queries)) qs.push_back(retrieval::query_of(it));
    const auto report = retrieval::evaluate_retrieval(retriever, qs, retrieval::load_judgments(*judgments), parse_k_list(*klist));
    std::cout << report.table();
    std::cout << "queries evaluated: " << report.evaluated << '\n';
    for (const auto& f : report.flagged) std::cout << "flagged: " << f << '\n';
    std::cout << "consistency (hits = P@K*K = R@K*|relevant|): " << (report.consistent ? "ok" : "VIOLATED") << '\n';
  });

  auto* attach = r->add_subcommand("attach", "Fill each item's context from retrieval");
  auto acorpus = std::make_shared<std::string>();
  auto adata = std::make_shared<std::string>();
  auto aout = std::make_shared<std::string>();
  auto ak = std::make_shared<std::size_t>(15);
  auto amode = std::make_shared<std::string>("rrf");
  auto acap = std::make_shared<int>(400);
  auto adim = std::make_shared<int>(64);
  attach->add_option("--corpus", *acorpus)->required();
  attach->add_option("--dataset", *adata)->required();
  attach->add_option("--out", *aout)->required();
  attach->add_option("--k", *ak);
  attach->add_option("--mode", *amode);
  attach->add_option("--cap", *acap, "Context token cap");
  attach->add_option("--dim", *adim);
  attach->callback([=] {
    const auto retriever = make_retriever(*acorpus, *adim);
    auto items = load_dataset(*adata);
    std::size_t empty = 0;
    for (auto& it : items) {
      const auto res = retriever.attach_context(it, *ak, *acap, retrieval::parse_mode(*amode));
      if (res.empty) {
        ++empty;
        std::cerr << "warning: no context retrieved for " << it.id << '\n';
      }
    }
    write_dataset(*aout, items);
    std::cout << "attached contexts to " << items.size() << " items (" << empty << " empty) -> " << *aout << '\n';
  });
}

// ----------------------------------------------------------------- encoder

void add_encoder(CLI::App& app) {
  auto* enc = app.add_subcommand("encoder", "Encoder inspection");
  enc->require_subcommand(1);
  auto* dump = enc->add_subcommand("dump-phrasal", "Print the phrasal score matrix of a text");
  auto input = std::make_shared<std::string>();
  auto ckpt = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(13);
  auto role = std::make_shared<std::string>("question");
  dump->add_option("--input", *input, "Text to encode")->required();
  dump->add_option("--ckpt", *ckpt, "Use trained weights (otherwise a seeded random encoder)");
  dump->add_option("--seed", *seed);
  dump->add_option("--role", *role, "question, option or context");
  dump->callback([=] {
    encoder::TextRole r = encoder::TextRole::Question;
    if (*role == "option") r = encoder::TextRole::Option;
    else if (*role == "context") r = encoder::TextRole::Context;
    else if (*role != "question") throw std::invalid_argument("unknown role " + *role);

    std::unique_ptr<ViMultiChoice> model;
    Vocabulary vocab;
    if (!ckpt->empty()) {
      const Checkpoint c = load_checkpoint(*ckpt);
      vocab = c.vocab;
      model = instantiate(c);
    } else {
      for (const auto& w : default_tokenizer().split(*input)) vocab.add(w);
      ModelConfig mc;
      mc.vocab_size = vocab.size();
      mc.seed = *seed;
      model = std::make_unique<ViMultiChoice>(mc);
      // A fresh bilinear form is zero, which makes every link 1/sqrt(2)
      // in the interior; draw one so the output is informative.
      Rng rng(*seed);
      for (const char* name : {"encoder.vwf.question.bilinear", "encoder.vwf.option.bilinear", "encoder.vwf.context.bilinear"}) {
        auto& p = model->parameters().at(name);
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.normal() / p.value.rows();
      }
    }
    if (!model->config().viwordformer) throw std::invalid_argument("checkpoint was trained without ViWordFormer");
    const auto seq = tokenize(*input, vocab);
    ag::Tape t(false);
    encoder::EncoderTrace trace;
    model->text_encoder().encode(t, seq.ids, ag::full_mask(static_cast<Eigen::Index>(seq.size())), r, &trace);
    std::cout << "tokens:";
    for (const auto& s : seq.surface) std::cout << ' ' << s;
    std::cout << "\nlinks:";
    for (Eigen::Index i = 0; i < trace.links.size(); ++i) std::printf(" %.6f", trace.links(i));
    std::cout << "\nP (" << trace.phrasal.rows() << "x" << trace.phrasal.cols() << "):\n" << format_matrix(trace.phrasal);
  });
}

// ---------------------------------------------------------------- inspect

void add_inspect(CLI::App& app) {
  auto* ins = app.add_subcommand("inspect", "Model inspection");
  ins->require_subcommand(1);
  auto* att = ins->add_subcommand("attention", "Dump one attention matrix for one item");
  auto ckpt = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto item = std::make_shared<std::string>();
  auto stage = std::make_shared<std::string>();
  att->add_option("--ckpt", *ckpt)->required();
  att->add_option("--data", *data)->required();
  att->add_option("--item", *item)->required();
  att->add_option("--stage", *stage, "Stage name; omit to list the available stages");
  att->callback([=] {
    const Checkpoint c = load_checkpoint(*ckpt);
    const auto model = instantiate(c);
    for (const auto& it : load_dataset(*data)) {
      if (it.id != *item) continue;
      const PreparedItem p = prepare(tokenize_item(it, c.vocab), c.config.caps, c.config.explanation_cap);
      ag::Tape t(false);
      inference::AttentionTrace trace;
      encoder::EncoderTrace qtrace;
      model->forward(t, p, &trace, &qtrace);
      if (qtrace.phrasal.size() > 0) trace["encoder/question/phrasal"] = qtrace.phrasal;
      for (std::size_t h = 0; h < qtrace.attention.size(); ++h) {
        trace["encoder/question/head" + std::to_string(h)] = qtrace.attention[h];
        trace["encoder/question/head" + std::to_string(h) + "/modulated"] = qtrace.modulated[h];
      }
      if (stage->empty()) {
        for (const auto& [name, m] : trace) std::cout << name << " (" << m.rows() << "x" << m.cols() << ")\n";
        return;
      }
      auto found = trace.find(*stage);
      if (found == trace.end()) throw std::invalid_argument("unknown stage '" + *stage + "'; omit --stage to list");
      std::cout << format_matrix(found->second);
      return;
    }
    throw std::invalid_argument("item '" + *item + "' not found in " + *data);
  });
}

// ------------------------------------------------------------------ train

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train a model");
  auto config = std::make_shared<std::string>();
  auto train_path = std::make_shared<std::string>();
  auto dev_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto overrides = std::make_shared<std::vector<std::string>>();
  cmd->add_option("--config", *config, "key = value configuration file");
  cmd->add_option("--train", *train_path, "Training data (overrides train_path)");
  cmd->add_option("--dev", *dev_path, "Dev data (overrides dev_path)");
  cmd->add_option("--out", *out, "Checkpoint path (overrides checkpoint_path)");
  cmd->add_option("--set", *overrides, "Extra key=value settings");
  cmd->callback([=] {
    TrainConfig cfg = config->empty() ? TrainConfig{} : load_train_config(*config);
    for (const auto& kv : *overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!train_path->empty()) cfg.train_path = *train_path;
    if (!dev_path->empty()) cfg.dev_path = *dev_path;
    if (!out->empty()) cfg.checkpoint_path = *out;
    if (cfg.checkpoint_path.empty()) cfg.checkpoint_path = "model.ckpt";
    validate(cfg);
    if (cfg.train_path.empty()) throw std::invalid_argument("no training data: set train_path or pass --train");

    auto attach = [&](std::vector<McqItem>& items) {
      if (cfg.corpus_path.empty()) return;
      const auto retriever = make_retriever(cfg.corpus_path, 64);
      for (auto& it : items) {
        if (!it.context) retriever.attach_context(it, static_cast<std::size_t>(cfg.retrieval_k), cfg.caps.context, cfg.retrieval_mode);
      }
    };
    auto train_items = load_dataset(cfg.train_path);
    attach(train_items);
    std::vector<McqItem> dev_items;
    if (!cfg.dev_path.empty()) {
      dev_items = load_dataset(cfg.dev_path);
      attach(dev_items);
    }
    std::ofstream log;
    if (!cfg.log_path.empty()) log.open(cfg.log_path);
    const auto started = std::chrono::steady_clock::now();
    const auto result = train(cfg, train_items, dev_items, [&](const EpochRecord& r) {
      const std::string line = format_epoch(r);
      std::cout << line << std::endl;
      if (log) log << line << '\n';
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    save_checkpoint(cfg.checkpoint_path, result.best);
    std::printf("best epoch %d (dev F1-macro %.4f) of %zu%s; %.1fs; checkpoint -> %s\n", result.best.epoch,
                result.best.best.value, result.history.size(), result.early_stopped ? ", early stopped" : "", secs,
                cfg.checkpoint_path.c_str());
  });
}

// ---------------------------------------------------------- evaluate/predict

heads::DecodeOptions decode_options(int beam, int max_len) {
  heads::DecodeOptions d;
  d.max_len = max_len;
  if (beam > 1) {
    d.strategy = heads::Strategy::Beam;
    d.beam_size = beam;
  }
  return d;
}

void add_evaluate(CLI::App& app) {
  auto* cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a test set");
  auto ckpt = std::make_shared<std::string>();
  auto test = std::make_shared<std::string>();
  auto preds = std::make_shared<std::string>();
  auto vocab = std::make_shared<std::string>();
  auto no_gen = std::make_shared<bool>(false);
  auto beam = std::make_shared<int>(1);
  auto max_len = std::make_shared<int>(300);
  cmd->add_option("--ckpt", *ckpt)->required();
  cmd->add_option("--test", *test)->required();
  cmd->add_option("--predictions", *preds, "Prediction file (JSONL)");
  cmd->add_option("--vocab", *vocab, "Vocabulary the data was prepared with; must match the checkpoint");
  cmd->add_flag("--no-generate", *no_gen, "Skip explanation generation");
  cmd->add_option("--beam", *beam, "Beam size (1 = greedy)");
  cmd->add_option("--max-len", *max_len);
  cmd->callback([=] {
    const Checkpoint c = load_checkpoint(*ckpt);
    std::optional<Vocabulary> expected;
    if (!vocab->empty()) expected = Vocabulary::load(*vocab);
    const auto ev = evaluate(c, load_dataset(*test), !*no_gen, decode_options(*beam, *max_len), expected ? &*expected : nullptr);
    print_report(ev.report);
    const std::string path = preds->empty() ? "predictions.jsonl" : *preds;
    write_predictions(path, ev.predictions, c.vocab);
    std::cout << "predictions -> " << path << '\n';
  });
}

void add_predict(CLI::App& app) {
  auto* cmd = app.add_subcommand("predict", "Predict answers and explanations");
  auto ckpt = std::make_shared<std::string>();
  auto input = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto beam = std::make_shared<int>(1);
  auto max_len = std::make_shared<int>(300);
  cmd->add_option("--ckpt", *ckpt)->required();
  cmd->add_option("--input", *input)->required();
  cmd->add_option("--out", *out, "Output JSONL (stdout when omitted)");
  cmd->add_option("--beam", *beam);
  cmd->add_option("--max-len", *max_len);
  cmd->callback([=] {
    const Checkpoint c = load_checkpoint(*ckpt);
    const auto model = instantiate(c);
    std::vector<Prediction> preds;
    for (const auto& it : load_dataset(*input)) {
      if (!it.context) throw std::invalid_argument("item '" + it.id + "' has no context; run retrieve attach first");
      preds.push_back(model->predict(prepare(tokenize_item(it, c.vocab), c.config.caps, c.config.explanation_cap), true,
                                     decode_options(*beam, *max_len)));
    }
    if (out->empty()) write_predictions(std::cout, preds, c.vocab);
    else write_predictions(*out, preds, c.vocab);
  });
}

// -------------------------------------------------------------- gradcheck

void add_gradcheck(CLI::App& app) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  auto module = std::make_shared<std::string>("all");
  auto seeds = std::make_shared<int>(20);
  auto first = std::make_shared<std::uint64_t>(1);
  auto tol = std::make_shared<double>(1e-3);
  auto corrupt = std::make_shared<std::string>();
  auto verbose = std::make_shared<bool>(false);
  cmd->add_option("--module", *module, "viwordformer, option_inference, heads or all");
  cmd->add_option("--seeds", *seeds, "Number of seeds");
  cmd->add_option("--first-seed", *first);
  cmd->add_option("--tolerance", *tol);
  cmd->add_option("--corrupt", *corrupt, "Zero this parameter's analytic gradient");
  cmd->add_flag("--verbose", *verbose, "Per-parameter errors");
  cmd->callback([=] {
    std::vector<gradcheck::Component> comps;
    if (*module == "all") {
      comps = {gradcheck::Component::ViWordFormer, gradcheck::Component::OptionInference, gradcheck::Component::Heads};
    } else {
      comps = {gradcheck::parse_component(*module)};
    }
    gradcheck::Options opt;
    opt.tolerance = *tol;
    if (!corrupt->empty()) opt.corrupt_parameter = *corrupt;
    bool all_pass = true;
    for (auto c : comps) {
      double worst = 0.0;
      for (int s = 0; s < *seeds; ++s) {
        const auto r = gradcheck::run(c, *first + static_cast<std::uint64_t>(s), opt);
        std::cout << r.summary() << '\n';
        if (*verbose) {
          for (const auto& p : r.parameters) std::printf("    %-40s %4zu  %.3e\n", p.name.c_str(), p.entries, p.max_relative_error);
        }
        worst = std::max(worst, r.max_relative_error);
        all_pass = all_pass && r.passed;
      }
      std::printf("%s: worst %.3e over %d seeds\n", gradcheck::to_string(c).c_str(), worst, *seeds);
    }
    if (!all_pass) throw CLI::RuntimeError("gradient check failed", 1);
  });
}

// ----------------------------------------------------------------- ablate

void add_ablate(CLI::App& app) {
  auto* cmd = app.add_subcommand("ablate", "Run the ViWordFormer x multitask ablation grid");
  auto grid = std::make_shared<bool>(false);
  auto config = std::make_shared<std::string>();
  auto train_path = std::make_shared<std::string>();
  auto test_path = std::make_shared<std::string>();
  auto seeds = std::make_shared<std::vector<std::uint64_t>>(std::vector<std::uint64_t>{1, 2, 3});
  auto synth_n = std::make_shared<int>(500);
  auto overrides = std::make_shared<std::vector<std::string>>();
  cmd->add_flag("--grid", *grid, "Run all four configurations")->required();
  cmd->add_option("--config", *config);
  cmd->add_option("--train", *train_path, "Training data (synthetic when omitted)");
  cmd->add_option("--test", *test_path, "Test data (synthetic when omitted)");
  cmd->add_option("--seeds", *seeds);
  cmd->add_option("--synth-n", *synth_n, "Synthetic training items when no data is given");
  cmd->add_option("--set", *overrides, "Extra key=value settings");
  cmd->callback([=] {
    TrainConfig cfg = config->empty() ? TrainConfig{} : load_train_config(*config);
    for (const auto& kv : *overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    validate(cfg);
    const auto train_items = train_path->empty() ? synth::synth_generate(*synth_n, 101) : load_dataset(*train_path);
    const auto test_items = test_path->empty() ? synth::synth_generate(std::max(1, *synth_n / 5), 202) : load_dataset(*test_path);
    const auto result = run_ablation(cfg, train_items, test_items, *seeds, [](const std::string& line) {
      std::cout << line << std::endl;
    });
    std::cout << '\n' << result.table();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vimc: retrieval-augmented multiple-choice reading comprehension"};
  app.require_subcommand(1);
  add_synth(app);
  add_data(app);
  add_retrieve(app);
  add_encoder(app);
  add_inspect(app);
  add_train(app);
  add_evaluate(app);
  add_predict(app);
  add_gradcheck(app);
  add_ablate(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
