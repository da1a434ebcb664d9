#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "checks.hpp"
#include "mind/error.hpp"
#include "mind/io.hpp"
#include "mind/random.hpp"

namespace mind::cli {
namespace {

using nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_manifest(const std::filesystem::path& path, std::string_view command, const ordered_json& config,
                    const ordered_json& extra = ordered_json::object()) {
  ordered_json m;
  m["run_id"] = hex64(fnv1a64(std::string(command) + config.dump()));
  m["command"] = command;
  m["engine_version"] = kEngineVersion;
  m["config"] = config;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  io::write_file(path, m.dump(2) + "\n");
}

std::filesystem::path resolve_out(const std::filesystem::path& p) {
  return p.empty() ? default_data_dir() : p;
}

}  // namespace

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') return env;
  return ".";
}

// --- datagen ----------------------------------------------------------------

DatagenSummary cmd_datagen(const DatagenOptions& opts, std::ostream& log) {
  const auto out_dir = resolve_out(opts.out_dir);
  const auto loaded = corpus::load_corpus(opts.corpus, opts.format);
  for (const auto& w : loaded.warnings) log << "warning: " << opts.corpus.string() << ": " << w << "\n";

  std::map<std::string, corpus::EntityAnnotationFile> annotations;
  if (opts.annotations) annotations = corpus::load_annotations(*opts.annotations);
  const auto batch = datagen::build_generation_requests(loaded.articles, opts.annotations ? &annotations : nullptr,
                                                        opts.mode, opts.seed);
  io::write_file(out_dir / "requests.jsonl", datagen::requests_to_jsonl(batch.requests));

  ordered_json config = {
      {"corpus", opts.corpus.string()},
      {"format", opts.format == corpus::CorpusFormat::kJsonl ? "jsonl" : "wikitext"},
      {"annotations", opts.annotations ? ordered_json(opts.annotations->string()) : ordered_json(nullptr)},
      {"mode", datagen::mode_name(opts.mode)},
      {"seed", opts.seed},
      {"out_dir", out_dir.string()},
  };
  ordered_json extra = {
      {"seeds", {{"entity_selection", opts.seed}}},
      {"malformed_tolerance", corpus::kMaxMalformedFraction},
      {"abbreviations_version", corpus::abbreviations_version()},
      {"prompt_template", opts.mode == datagen::PromptMode::kBase ? "wikipedia-passage-about" : "chat-continue-wrapper"},
      {"entity_source", opts.annotations ? "annotations" : "capitalized-span-heuristic"},
      {"counts",
       {{"records", loaded.records},
        {"malformed", loaded.malformed},
        {"requests", batch.requests.size()},
        {"skipped", batch.skipped}}},
      {"outputs", {(out_dir / "requests.jsonl").string()}},
  };
  write_manifest(out_dir / "manifest.datagen.json", "datagen", config, extra);
  log << "datagen: " << loaded.articles.size() << " articles, " << batch.requests.size() << " requests, "
      << batch.skipped << " skipped (no eligible entity)\n";
  return {loaded.articles.size(), loaded.malformed, batch.requests.size(), batch.skipped};
}

// --- assemble ---------------------------------------------------------------

datagen::LabelingResult cmd_assemble(const AssembleOptions& opts, std::ostream& log) {
  const auto out_dir = resolve_out(opts.out_dir);
  const auto requests = datagen::requests_from_jsonl(io::read_file(opts.requests));
  const auto transcripts = datagen::transcripts_from_jsonl(io::read_file(opts.transcripts));
  const auto trace_dir = opts.trace_dir.value_or(opts.transcripts.parent_path());
  const auto loader = datagen::file_trace_loader(trace_dir);

  auto labeled = datagen::label_transcripts(requests, transcripts, loader);
  const auto ds = datagen::assemble_dataset(labeled.tuples, opts.variant, loader);
  const auto [neg, pos] = ds.class_counts();
  if (neg == 0 || pos == 0) log << "warning: assembled dataset has a single class\n";
  const auto [train, dev] = datagen::split_dataset(ds, opts.train_fraction, opts.seed);

  datagen::save_dataset(out_dir / "dataset.mndd", ds);
  datagen::save_dataset(out_dir / "train.mndd", train);
  datagen::save_dataset(out_dir / "dev.mndd", dev);

  std::string tuples, labels;
  for (const auto& t : labeled.tuples) {
    ordered_json j = {{"llm_id", t.llm_id},   {"article_id", t.article_id}, {"request_id", t.request_id},
                      {"continuation", t.continuation}, {"trace_ref", t.trace_ref},   {"label", t.label},
                      {"sentence_tokens", t.sentence_tokens}};
    tuples += j.dump() + "\n";
    // Only the first sentence of each continuation is labeled; its unit id
    // matches what sentence-granularity scoring emits for that transcript.
    scoring::ScorerOptions so;
    so.stream_id = t.request_id;
    ordered_json l = {{"unit_id", scoring::unit_id(so, 0)}, {"passage_id", t.article_id}, {"sentence_index", 0}, {"label", t.label}};
    labels += l.dump() + "\n";
  }
  io::write_file(out_dir / "tuples.jsonl", tuples);
  io::write_file(out_dir / "labels.jsonl", labels);

  ordered_json config = {
      {"requests", opts.requests.string()},
      {"transcripts", opts.transcripts.string()},
      {"trace_dir", trace_dir.string()},
      {"feature", trace::variant_name(opts.variant)},
      {"train_fraction", opts.train_fraction},
      {"seed", opts.seed},
      {"out_dir", out_dir.string()},
  };
  ordered_json extra = {
      {"seeds", {{"split", opts.seed}}},
      {"label_rule", "normalized-prefix / absent / discard-otherwise"},
      {"counts",
       {{"non_hallucination", labeled.non_hallucination},
        {"hallucination", labeled.hallucination},
        {"discarded", labeled.discarded},
        {"failed", labeled.failed},
        {"rows", ds.size()},
        {"dim", ds.dim},
        {"train", train.size()},
        {"dev", dev.size()}}},
  };
  write_manifest(out_dir / "manifest.assemble.json", "assemble", config, extra);
  log << "assemble: " << labeled.non_hallucination << " non-hallucination, " << labeled.hallucination
      << " hallucination, " << labeled.discarded << " discarded, " << labeled.failed << " failed; train "
      << train.size() << " / dev " << dev.size() << " (d=" << ds.dim << ")\n";
  return labeled;
}

// --- train ------------------------------------------------------------------

classifier::TrainResult cmd_train(const TrainOptions& opts, std::ostream& log) {
  const auto out_dir = resolve_out(opts.out_dir);
  const auto train_set = datagen::load_dataset(opts.train);
  const auto dev_set = datagen::load_dataset(opts.dev);
  auto mlp = opts.mlp;
  mlp.input_dim = train_set.dim;
  const auto result = classifier::train(classifier::init_model(mlp), train_set, dev_set, opts.train_config);
  classifier::save_model(result.model, out_dir / "model.mndm");

  std::string history;
  for (const auto& e : result.history) {
    ordered_json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_accuracy", e.dev_accuracy}};
    history += j.dump() + "\n";
    log << "epoch " << e.epoch << ": loss " << e.train_loss << ", dev accuracy " << e.dev_accuracy << "\n";
  }
  io::write_file(out_dir / "history.jsonl", history);

  const auto& tc = opts.train_config;
  ordered_json config = {
      {"train", opts.train.string()},
      {"dev", opts.dev.string()},
      {"hidden_dims", mlp.hidden_dims},
      {"dropout", mlp.dropout_rate},
      {"init_seed", mlp.seed},
      {"learning_rate", tc.learning_rate},
      {"weight_decay", tc.weight_decay},
      {"batch_size", tc.batch_size},
      {"max_epochs", tc.max_epochs},
      {"patience", tc.patience},
      {"seed", tc.seed},
      {"out_dir", out_dir.string()},
  };
  ordered_json extra = {
      {"seeds", {{"init", mlp.seed}, {"shuffle_and_dropout", tc.seed}}},
      {"optimizer", {{"name", "adamw"}, {"beta1", tc.beta1}, {"beta2", tc.beta2}, {"epsilon", tc.epsilon}}},
      {"initialization", "uniform(+-1/sqrt(fan_in)), zero bias"},
      {"stopping", "early stop on dev accuracy"},
      {"result",
       {{"epochs_run", result.model.metadata.epochs_run},
        {"best_epoch", result.model.metadata.best_epoch},
        {"best_dev_accuracy", result.model.metadata.best_dev_accuracy}}},
  };
  write_manifest(out_dir / "manifest.train.json", "train", config, extra);
  log << "train: best dev accuracy " << result.model.metadata.best_dev_accuracy << " at epoch "
      << result.model.metadata.best_epoch << "\n";
  return result;
}

// --- score ------------------------------------------------------------------

namespace {

std::size_t score_one(const classifier::MlpModel& model, std::istream& in, TraceMode mode,
                      const scoring::ScorerOptions& sopts, std::ostream& out) {
  std::size_t events = 0;
  const auto sink = [&](const scoring::ScoreEvent& ev) {
    out << scoring::event_to_jsonl(ev);
    if (mode == TraceMode::kStream) out.flush();
    ++events;
  };
  trace::TraceReader reader(in);
  if (mode == TraceMode::kStream) {
    scoring::StreamingScorer scorer(model, reader.header(), sopts);
    trace::TokenRecord rec;
    while (reader.next(rec)) scorer.push(rec, sink);
    scorer.finish(sink);
  } else {
    trace::Trace tr{reader.header(), {}};
    trace::TokenRecord rec;
    while (reader.next(rec)) tr.records.push_back(rec);
    for (const auto& ev : scoring::score_trace(model, tr, sopts)) sink(ev);
  }
  return events;
}

}  // namespace

std::size_t cmd_score(const ScoreOptions& opts, std::istream& in, std::ostream& out, std::ostream& log) {
  const auto model = classifier::load_model(opts.model);
  scoring::ScorerOptions sopts;
  if (opts.variant) {
    sopts.variant = *opts.variant;
  } else {
    const auto v = trace::parse_variant(model.metadata.feature_variant);
    if (!v) throw DataError("model names unknown feature variant " + model.metadata.feature_variant);
    sopts.variant = *v;
  }
  sopts.granularity = opts.granularity;
  sopts.baselines = opts.baselines;

  std::ofstream file_out;
  std::ostream* sink = &out;
  if (opts.out) {
    if (opts.out->has_parent_path()) std::filesystem::create_directories(opts.out->parent_path());
    file_out.open(*opts.out, std::ios::binary | std::ios::trunc);
    if (!file_out) throw DataError("cannot write " + opts.out->string());
    sink = &file_out;
  }

  std::size_t events = 0;
  if (opts.transcripts) {
    const auto transcripts = datagen::transcripts_from_jsonl(io::read_file(*opts.transcripts));
    const auto base = opts.transcripts->parent_path();
    for (const auto& t : transcripts) {
      if (t.status != "ok") continue;
      std::filesystem::path p(t.trace_ref);
      if (p.is_relative()) p = base / p;
      std::ifstream f(p, std::ios::binary);
      if (!f) throw DataError("cannot open trace " + p.string() + " for " + t.request_id);
      sopts.stream_id = t.request_id;
      events += score_one(model, f, opts.mode, sopts, *sink);
    }
  } else if (opts.trace && opts.trace->string() != "-") {
    std::ifstream f(*opts.trace, std::ios::binary);
    if (!f) throw DataError("cannot open trace " + opts.trace->string());
    sopts.stream_id = opts.stream_id;
    events = score_one(model, f, opts.mode, sopts, *sink);
  } else {
    sopts.stream_id = opts.stream_id;
    events = score_one(model, in, opts.mode, sopts, *sink);
  }
  sink->flush();

  std::optional<std::filesystem::path> manifest_path = opts.manifest;
  if (!manifest_path && opts.out) manifest_path = opts.out->string() + ".manifest.json";
  if (manifest_path) {
    ordered_json config = {
        {"model", opts.model.string()},
        {"trace", opts.trace ? ordered_json(opts.trace->string()) : ordered_json(nullptr)},
        {"transcripts", opts.transcripts ? ordered_json(opts.transcripts->string()) : ordered_json(nullptr)},
        {"mode", opts.mode == TraceMode::kStream ? "stream" : "file"},
        {"feature", trace::variant_name(sopts.variant)},
        {"granularity", scoring::granularity_name(opts.granularity)},
        {"baselines", opts.baselines},
        {"stream_id", opts.stream_id},
        {"out", opts.out ? ordered_json(opts.out->string()) : ordered_json(nullptr)},
    };
    ordered_json extra = {{"probability_orientation", "neg-logprob"}, {"events", events}};
    write_manifest(*manifest_path, "score", config, extra);
  }
  log << "score: " << events << " events\n";
  return events;
}

// --- eval -------------------------------------------------------------------

std::vector<MethodReport> cmd_eval(const EvalOptions& opts, std::ostream& out) {
  struct LabelRow {
    std::string passage_id;
    std::size_t sentence_index = 0;
    std::uint8_t label = 0;
  };
  std::map<std::string, LabelRow> labels;
  const auto label_text = io::read_file(opts.labels);
  const auto label_lines = io::split_lines(label_text);
  for (std::size_t ln = 0; ln < label_lines.size(); ++ln) {
    if (label_lines[ln].find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(label_lines[ln], nullptr, false);
    try {
      if (j.is_discarded()) throw DataError("unparseable");
      LabelRow row{j.at("passage_id").get<std::string>(), j.value("sentence_index", std::size_t{0}),
                   j.at("label").get<std::uint8_t>()};
      if (row.label > 1) throw DataError("label must be 0 or 1");
      labels[j.at("unit_id").get<std::string>()] = row;
    } catch (const std::exception& e) {
      throw DataError("labels line " + std::to_string(ln + 1) + ": " + e.what());
    }
  }

  std::vector<std::string> methods;
  std::map<std::string, std::vector<eval::ScoredUnit>> by_method;
  std::size_t unlabeled = 0;
  const auto score_text = io::read_file(opts.scores);
  const auto score_lines = io::split_lines(score_text);
  for (std::size_t ln = 0; ln < score_lines.size(); ++ln) {
    if (score_lines[ln].find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(score_lines[ln], nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("scores line " + std::to_string(ln + 1) + ": unparseable");
    if (j.value("partial", false)) continue;
    std::string unit, method;
    double score = 0.0;
    try {
      unit = j.at("unit_id").get<std::string>();
      method = j.at("method").get<std::string>();
      score = j.at("score").get<double>();
    } catch (const std::exception& e) {
      throw DataError("scores line " + std::to_string(ln + 1) + ": " + e.what());
    }
    const auto it = labels.find(unit);
    if (it == labels.end()) {
      ++unlabeled;
      continue;
    }
    if (!by_method.contains(method)) methods.push_back(method);
    by_method[method].push_back({unit, it->second.passage_id, it->second.sentence_index, score, it->second.label});
  }
  if (methods.empty()) throw DataError("no labeled scores in " + opts.scores.string());

  std::vector<MethodReport> reports;
  std::vector<eval::TableRow> rows;
  std::string json_lines;
  for (const auto& m : methods) {
    const auto report = eval::evaluate(by_method[m], opts.level, opts.passage_score);
    reports.push_back({m, report});
    rows.push_back({m, opts.model_name, report.auc, report.corr});
    json_lines += eval::report_to_json(report, m) + "\n";
  }
  out << "level: " << eval::level_name(opts.level) << "\n" << eval::render_table(rows);
  if (unlabeled > 0) out << "(" << unlabeled << " score rows without a label were ignored)\n";
  if (opts.out) {
    io::write_file(*opts.out, json_lines);
    ordered_json config = {
        {"scores", opts.scores.string()},
        {"labels", opts.labels.string()},
        {"level", eval::level_name(opts.level)},
        {"passage_score", opts.passage_score == eval::PassageScore::kMax ? "max" : "mean"},
        {"model_name", opts.model_name},
        {"out", opts.out->string()},
    };
    write_manifest(opts.out->string() + ".manifest.json", "eval", config,
                   {{"auc_ties", "half-credit"}, {"corr_target", "binary labels"}});
  }
  return reports;
}

// --- selftest ---------------------------------------------------------------

bool cmd_selftest(const SelftestOptions& opts, std::ostream& out) {
  std::vector<testing::CheckResult> results;
  results.push_back(testing::check_gradient_fidelity());
  results.push_back(testing::check_codec_roundtrip(opts.quick ? 500 : 10000));
  results.push_back(testing::check_auc_oracle(opts.quick ? 100 : 1000));
  results.push_back(testing::check_entropy_analytics());
  results.push_back(testing::check_feature_fixtures(opts.quick ? 1000 : 10000));
  results.push_back(testing::check_labeling_truth_table());
  if (!opts.quick) results.push_back(testing::check_synthetic_separability());
  bool ok = true;
  for (const auto& r : results) {
    out << testing::format_result(r) << "\n";
    ok = ok && r.passed;
  }
  out << (ok ? "selftest: all checks passed" : "selftest: FAILED") << "\n";
  return ok;
}

}  // namespace mind::cli
