#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "vimc/checkpoint.hpp"
#include "vimc/config.hpp"
#include "vimc/data.hpp"
#include "vimc/evaluate.hpp"
#include "vimc/gradcheck.hpp"
#include "vimc/metrics.hpp"
#include "vimc/retrieval.hpp"
#include "vimc/synth.hpp"
#include "vimc/train.hpp"

namespace py = pybind11;
using namespace vimc;

namespace {

// Items cross the boundary as plain dicts with the JSONL field names.
py::dict item_to_dict(const McqItem& it) {
  py::dict d;
  d["id"] = it.id;
  d["subject"] = std::string(to_string(it.subject));
  d["grade"] = it.grade;
  d["question"] = it.question;
  d["options"] = py::list(py::cast(std::vector<std::string>(it.options.begin(), it.options.end())));
  d["answer"] = it.answer;
  d["explanation"] = it.explanation ? py::cast(*it.explanation) : py::none();
  d["context"] = it.context ? py::cast(*it.context) : py::none();
  return d;
}

McqItem item_from_dict(const py::dict& d) {
  McqItem it;
  it.id = d["id"].cast<std::string>();
  it.subject = parse_subject(d["subject"].cast<std::string>());
  if (d.contains("grade")) it.grade = d["grade"].cast<int>();
  it.question = d["question"].cast<std::string>();
  const auto opts = d["options"].cast<std::vector<std::string>>();
  if (opts.size() != kNumOptions) throw py::value_error("item '" + it.id + "' needs exactly 4 options");
  std::copy(opts.begin(), opts.end(), it.options.begin());
  it.answer = d["answer"].cast<int>();
  if (d.contains("explanation") && !d["explanation"].is_none()) it.explanation = d["explanation"].cast<std::string>();
  if (d.contains("context") && !d["context"].is_none()) it.context = d["context"].cast<std::string>();
  validate(it);
  return it;
}

py::list items_to_list(const std::vector<McqItem>& items) {
  py::list out;
  for (const auto& it : items) out.append(item_to_dict(it));
  return out;
}

std::vector<McqItem> items_from_list(const py::list& items) {
  std::vector<McqItem> out;
  out.reserve(items.size());
  for (const auto& h : items) out.push_back(item_from_dict(h.cast<py::dict>()));
  return out;
}

TrainConfig config_from_dict(const py::dict& d) {
  TrainConfig c;
  for (const auto& [k, v] : d) set_config_value(c, k.cast<std::string>(), py::str(v).cast<std::string>());
  validate(c);
  return c;
}

py::list ranked_to_list(const retrieval::RankedList& r) {
  py::list out;
  for (const auto& e : r.entries) out.append(py::make_tuple(e.unit_id, e.score));
  return out;
}

retrieval::RankedList ranked_from_list(const std::vector<std::pair<int, double>>& entries) {
  retrieval::RankedList r;
  for (const auto& [id, score] : entries) r.entries.push_back({id, score});
  return r;
}

py::dict report_to_dict(const MetricReport& r) {
  py::dict d;
  d["count"] = r.count;
  d["accuracy"] = r.accuracy;
  d["f1_macro"] = r.f1_macro;
  d["bleu4"] = r.bleu4 ? py::cast(*r.bleu4) : py::none();
  d["rouge_l"] = r.rouge_l ? py::cast(*r.rouge_l) : py::none();
  d["explanations_evaluated"] = r.explanations_evaluated;
  d["explanations_skipped"] = r.explanations_skipped;
  auto rows = [](const std::vector<BreakdownRow>& rs) {
    py::list l;
    for (const auto& b : rs) {
      py::dict row;
      row["group"] = b.group;
      row["count"] = b.count;
      row["accuracy"] = b.accuracy;
      row["f1_macro"] = b.f1_macro;
      l.append(row);
    }
    return l;
  };
  d["by_subject"] = rows(r.by_subject);
  d["by_grade"] = rows(r.by_grade);
  d["table"] = r.table();
  return d;
}

py::dict epoch_to_dict(const EpochRecord& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["loss_mc"] = e.loss_mc;
  d["loss_e"] = e.loss_e;
  d["dev_accuracy"] = e.dev_accuracy;
  d["dev_f1"] = e.dev_f1;
  d["improved"] = e.improved;
  return d;
}

class PyRetriever {
 public:
  PyRetriever(const std::string& corpus_path, int dimension, double k1, double b, int k_rrf)
      : r_(retrieval::load_corpus(corpus_path), std::make_shared<retrieval::HashingEmbedder>(dimension),
           retrieval::Bm25Params{k1, b}, k_rrf) {}

  py::list retrieve(const py::dict& item, std::size_t k, const std::string& mode) const {
    return ranked_to_list(r_.retrieve(retrieval::query_of(item_from_dict(item)), k, retrieval::parse_mode(mode)));
  }

  py::dict attach(const py::dict& item, std::size_t k, int cap, const std::string& mode) const {
    McqItem it = item_from_dict(item);
    r_.attach_context(it, k, cap, retrieval::parse_mode(mode));
    return item_to_dict(it);
  }

  py::dict evaluate(const std::string& queries_path, const std::string& judgments_path,
                    const std::vector<std::size_t>& ks) const {
    std::vector<retrieval::Query> queries;
    for (const auto& it : load_dataset(queries_path)) queries.push_back(retrieval::query_of(it));
    const auto report = retrieval::evaluate_retrieval(r_, queries, retrieval::load_judgments(judgments_path), ks);
    py::dict cells;
    for (const auto& [key, cell] : report.cells) {
      cells[py::make_tuple(std::string(retrieval::to_string(key.first)), key.second)] =
          py::make_tuple(cell.precision, cell.recall);
    }
    py::dict d;
    d["cells"] = cells;
    d["evaluated"] = report.evaluated;
    d["flagged"] = report.flagged;
    d["consistent"] = report.consistent;
    d["table"] = report.table();
    return d;
  }

  std::size_t size() const { return r_.units().size(); }

 private:
  retrieval::Retriever r_;
};

}  // namespace

PYBIND11_MODULE(_vimc, m) {
  m.doc() = "Multiple-choice reading comprehension core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<VocabularyMismatch>(m, "VocabularyMismatch", PyExc_ValueError);

  // data
  m.def("load_dataset", [](const std::string& path) { return items_to_list(load_dataset(path)); }, py::arg("path"));
  m.def("write_dataset", [](const std::string& path, const py::list& items) { write_dataset(path, items_from_list(items)); },
        py::arg("path"), py::arg("items"));
  m.def("validate", [](const py::dict& item) { (void)item_from_dict(item); }, py::arg("item"));
  m.def(
      "debias_shuffle",
      [](const py::list& items, std::uint64_t seed) {
        std::vector<McqItem> out;
        for (auto& s : debias_shuffle(items_from_list(items), seed)) out.push_back(std::move(s.item));
        return items_to_list(out);
      },
      py::arg("items"), py::arg("seed"));
  m.def("option_distribution", [](const py::list& items) { return option_distribution(items_from_list(items)); },
        py::arg("items"));
  m.def(
      "synth",
      [](int n, std::uint64_t seed, int vocab_size) { return items_to_list(synth::synth_generate(n, seed, vocab_size)); },
      py::arg("n"), py::arg("seed") = 0, py::arg("vocab_size") = 200);

  // metrics
  m.def(
      "classification_metrics",
      [](const std::vector<int>& gold, const std::vector<int>& pred) {
        const auto c = metrics::classification_metrics(gold, pred);
        py::dict d;
        d["accuracy"] = c.accuracy;
        d["f1_macro"] = c.f1_macro;
        d["count"] = c.count;
        d["correct"] = c.correct;
        return d;
      },
      py::arg("gold"), py::arg("predicted"));
  m.def("corpus_bleu4", &metrics::corpus_bleu4, py::arg("hypotheses"), py::arg("references"));
  m.def("rouge_l", &metrics::rouge_l, py::arg("hypothesis"), py::arg("reference"));

  // retrieval
  m.def(
      "rrf_fuse",
      [](const std::vector<std::vector<std::pair<int, double>>>& lists, int k) {
        std::vector<retrieval::RankedList> rs;
        for (const auto& l : lists) rs.push_back(ranked_from_list(l));
        return ranked_to_list(retrieval::rrf_fuse(rs, k));
      },
      py::arg("lists"), py::arg("k") = 60);
  py::class_<PyRetriever>(m, "Retriever")
      .def(py::init<const std::string&, int, double, double, int>(), py::arg("corpus_path"), py::arg("dimension") = 64,
           py::arg("k1") = 1.2, py::arg("b") = 0.75, py::arg("k_rrf") = 60)
      .def("retrieve", &PyRetriever::retrieve, py::arg("item"), py::arg("k") = 15, py::arg("mode") = "rrf")
      .def("attach", &PyRetriever::attach, py::arg("item"), py::arg("k") = 15, py::arg("cap") = 400,
           py::arg("mode") = "rrf")
      .def("evaluate", &PyRetriever::evaluate, py::arg("queries_path"), py::arg("judgments_path"),
           py::arg("ks") = std::vector<std::size_t>{10, 15, 20, 30})
      .def("__len__", &PyRetriever::size);

  // gradient checks
  m.def(
      "gradcheck",
      [](const std::string& component, std::uint64_t seed, double tolerance) {
        gradcheck::Options opt;
        opt.tolerance = tolerance;
        const auto r = gradcheck::run(gradcheck::parse_component(component), seed, opt);
        py::dict d;
        d["passed"] = r.passed;
        d["max_relative_error"] = r.max_relative_error;
        d["worst_parameter"] = r.worst_parameter;
        d["failure"] = r.failure;
        d["summary"] = r.summary();
        return d;
      },
      py::arg("component"), py::arg("seed") = 0, py::arg("tolerance") = 1e-3);

  // training and evaluation
  m.def("default_config", [] { return to_text(TrainConfig{}); });
  m.def(
      "train",
      [](const py::dict& config, const py::list& train_items, const py::list& dev_items, const std::string& out) {
        const TrainConfig cfg = config_from_dict(config);
        const auto tr = items_from_list(train_items);
        const auto dv = items_from_list(dev_items);
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(cfg, tr, dv);
        }
        save_checkpoint(out, result.best);
        py::list history;
        for (const auto& e : result.history) history.append(epoch_to_dict(e));
        py::dict d;
        d["history"] = history;
        d["early_stopped"] = result.early_stopped;
        d["best_epoch"] = result.best.best.epoch;
        d["best_value"] = result.best.best.value;
        d["checkpoint"] = out;
        return d;
      },
      py::arg("config"), py::arg("train"), py::arg("dev") = py::list(), py::arg("out"));
  m.def(
      "evaluate",
      [](const std::string& checkpoint, const py::list& test_items, bool generate, int max_len) {
        const Checkpoint ckpt = load_checkpoint(checkpoint);
        const auto test = items_from_list(test_items);
        heads::DecodeOptions dec;
        dec.max_len = max_len;
        Evaluation ev;
        {
          py::gil_scoped_release release;
          ev = evaluate(ckpt, test, generate, dec);
        }
        py::list preds;
        for (const auto& p : ev.predictions) {
          py::dict d;
          d["id"] = p.id;
          d["answer"] = p.answer;
          d["probabilities"] = std::vector<double>(p.probabilities.begin(), p.probabilities.end());
          d["explanation"] = detokenize(p.explanation, ckpt.vocab);
          preds.append(d);
        }
        py::dict d;
        d["report"] = report_to_dict(ev.report);
        d["predictions"] = preds;
        return d;
      },
      py::arg("checkpoint"), py::arg("test"), py::arg("generate") = true, py::arg("max_len") = 40);
}
