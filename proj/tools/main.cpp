#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "mind/error.hpp"
#include "mind/io.hpp"

namespace {

using nlohmann::json;
using namespace mind;

// Options not given on the command line are taken from a previous run's
// manifest, so `--replay manifest.json` reproduces that run.
struct Replay {
  std::string path;
  json config;

  void load() {
    if (path.empty()) return;
    const auto j = json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded() || !j.contains("config")) throw DataError("replay: " + path + " is not a run manifest");
    config = j.at("config");
  }

  template <typename T>
  void fill(const CLI::Option* opt, const char* key, T& var) const {
    if (opt->count() > 0 || !config.contains(key) || config[key].is_null()) return;
    var = config[key].get<T>();
  }
};

template <typename T>
T parse_or_usage(std::optional<T> v, std::string_view what, const std::string& name) {
  if (!v) throw CLI::ValidationError("--" + std::string(what), "unknown value '" + name + "'");
  return *v;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIND: hallucination detection from LLM internal states"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::kEngineVersion));

  // datagen
  auto* dg = app.add_subcommand("datagen", "Truncate corpus articles at entities and write generation requests");
  std::string dg_corpus, dg_format = "jsonl", dg_annotations, dg_mode = "base", dg_out;
  std::uint64_t dg_seed = 0;
  Replay dg_replay;
  auto* dg_corpus_o = dg->add_option("--corpus", dg_corpus, "Corpus file (JSONL or WikiText)");
  auto* dg_format_o = dg->add_option("--format", dg_format, "jsonl | wikitext");
  auto* dg_ann_o = dg->add_option("--annotations", dg_annotations, "Entity annotation JSONL");
  auto* dg_mode_o = dg->add_option("--mode", dg_mode, "Prompt template: base | chat");
  auto* dg_seed_o = dg->add_option("--seed", dg_seed, "Entity selection seed");
  auto* dg_out_o = dg->add_option("--out-dir", dg_out, "Output directory (default $MIND_DATA_DIR or .)");
  dg->add_option("--replay", dg_replay.path, "Reuse the configuration of a datagen manifest");

  // assemble
  auto* as = app.add_subcommand("assemble", "Label transcripts and build feature datasets");
  std::string as_requests, as_transcripts, as_trace_dir, as_feature = "last-last", as_out;
  double as_fraction = 0.8;
  std::uint64_t as_seed = 0;
  Replay as_replay;
  auto* as_req_o = as->add_option("--requests", as_requests, "requests.jsonl from datagen");
  auto* as_tr_o = as->add_option("--transcripts", as_transcripts, "Transcript JSONL from the generator");
  auto* as_dir_o = as->add_option("--trace-dir", as_trace_dir, "Directory for relative trace refs");
  auto* as_feat_o = as->add_option("--feature", as_feature, "Feature variant");
  auto* as_frac_o = as->add_option("--train-fraction", as_fraction, "Share of rows in the train split");
  auto* as_seed_o = as->add_option("--seed", as_seed, "Split seed");
  auto* as_out_o = as->add_option("--out-dir", as_out, "Output directory");
  as->add_option("--replay", as_replay.path, "Reuse the configuration of an assemble manifest");

  // train
  auto* tr = app.add_subcommand("train", "Train the hallucination classifier");
  std::string tr_train, tr_dev, tr_out;
  classifier::MlpConfig tr_mlp;
  classifier::TrainConfig tr_cfg;
  Replay tr_replay;
  auto* tr_train_o = tr->add_option("--train", tr_train, "Training dataset (.mndd)");
  auto* tr_dev_o = tr->add_option("--dev", tr_dev, "Dev dataset (.mndd)");
  auto* tr_hidden_o = tr->add_option("--hidden", tr_mlp.hidden_dims, "Hidden layer widths");
  auto* tr_drop_o = tr->add_option("--dropout", tr_mlp.dropout_rate, "Dropout on the first hidden layer");
  auto* tr_iseed_o = tr->add_option("--init-seed", tr_mlp.seed, "Weight initialization seed");
  auto* tr_lr_o = tr->add_option("--lr", tr_cfg.learning_rate, "Learning rate");
  auto* tr_wd_o = tr->add_option("--weight-decay", tr_cfg.weight_decay, "Decoupled weight decay");
  auto* tr_bs_o = tr->add_option("--batch-size", tr_cfg.batch_size, "Mini-batch size");
  auto* tr_ep_o = tr->add_option("--max-epochs", tr_cfg.max_epochs, "Epoch limit");
  auto* tr_pat_o = tr->add_option("--patience", tr_cfg.patience, "Early-stopping patience");
  auto* tr_seed_o = tr->add_option("--seed", tr_cfg.seed, "Shuffle and dropout seed");
  auto* tr_out_o = tr->add_option("--out-dir", tr_out, "Output directory");
  tr->add_option("--replay", tr_replay.path, "Reuse the configuration of a train manifest");

  // score
  auto* sc = app.add_subcommand("score", "Score a trace (file, stdin stream, or transcript list)");
  std::string sc_model, sc_trace, sc_transcripts, sc_mode = "stream", sc_feature, sc_gran = "sentence",
                                                  sc_stream_id = "stream", sc_out, sc_manifest;
  bool sc_baselines = false;
  Replay sc_replay;
  auto* sc_model_o = sc->add_option("--model", sc_model, "Model file (.mndm)");
  auto* sc_trace_o = sc->add_option("--trace", sc_trace, "Trace file, or - for stdin");
  auto* sc_trs_o = sc->add_option("--transcripts", sc_transcripts, "Score every trace in a transcript JSONL");
  auto* sc_mode_o = sc->add_option("--mode", sc_mode, "stream | file");
  auto* sc_feat_o = sc->add_option("--feature", sc_feature, "Feature variant (default: the model's)");
  auto* sc_gran_o = sc->add_option("--granularity", sc_gran, "sentence | response");
  auto* sc_base_o = sc->add_flag("--baselines", sc_baselines, "Also emit PP/PE baseline scores");
  auto* sc_sid_o = sc->add_option("--stream-id", sc_stream_id, "Unit id prefix for a single trace");
  auto* sc_out_o = sc->add_option("--out", sc_out, "Score JSONL (default stdout)");
  sc->add_option("--manifest", sc_manifest, "Manifest path (default <out>.manifest.json)");
  sc->add_option("--replay", sc_replay.path, "Reuse the configuration of a score manifest");

  // eval
  auto* ev = app.add_subcommand("eval", "AUC and correlation of scores against labels");
  std::string ev_scores, ev_labels, ev_level = "sentence", ev_pscore = "max", ev_model = "model", ev_out;
  Replay ev_replay;
  auto* ev_scores_o = ev->add_option("--scores", ev_scores, "Score JSONL");
  auto* ev_labels_o = ev->add_option("--labels", ev_labels, "Label JSONL");
  auto* ev_level_o = ev->add_option("--level", ev_level, "sentence | passage");
  auto* ev_ps_o = ev->add_option("--passage-score", ev_pscore, "Passage aggregation: max | mean");
  auto* ev_model_o = ev->add_option("--model-name", ev_model, "Column label in the table");
  auto* ev_out_o = ev->add_option("--out", ev_out, "Report JSONL");
  ev->add_option("--replay", ev_replay.path, "Reuse the configuration of an eval manifest");

  // selftest
  auto* st = app.add_subcommand("selftest", "Run the built-in correctness checks");
  cli::SelftestOptions st_opts;
  st->add_flag("--quick", st_opts.quick, "Smaller suites, skip training");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (dg->parsed()) {
      dg_replay.load();
      dg_replay.fill(dg_corpus_o, "corpus", dg_corpus);
      dg_replay.fill(dg_format_o, "format", dg_format);
      dg_replay.fill(dg_ann_o, "annotations", dg_annotations);
      dg_replay.fill(dg_mode_o, "mode", dg_mode);
      dg_replay.fill(dg_seed_o, "seed", dg_seed);
      dg_replay.fill(dg_out_o, "out_dir", dg_out);
      require(dg_corpus, "--corpus");
      cli::DatagenOptions o;
      o.corpus = dg_corpus;
      if (dg_format == "jsonl") {
        o.format = corpus::CorpusFormat::kJsonl;
      } else if (dg_format == "wikitext") {
        o.format = corpus::CorpusFormat::kWikiText;
      } else {
        throw CLI::ValidationError("--format", "unknown value '" + dg_format + "'");
      }
      if (!dg_annotations.empty()) o.annotations = dg_annotations;
      o.mode = parse_or_usage(datagen::parse_mode(dg_mode), "mode", dg_mode);
      o.seed = dg_seed;
      o.out_dir = dg_out;
      cli::cmd_datagen(o, std::cerr);
    } else if (as->parsed()) {
      as_replay.load();
      as_replay.fill(as_req_o, "requests", as_requests);
      as_replay.fill(as_tr_o, "transcripts", as_transcripts);
      as_replay.fill(as_dir_o, "trace_dir", as_trace_dir);
      as_replay.fill(as_feat_o, "feature", as_feature);
      as_replay.fill(as_frac_o, "train_fraction", as_fraction);
      as_replay.fill(as_seed_o, "seed", as_seed);
      as_replay.fill(as_out_o, "out_dir", as_out);
      require(as_requests, "--requests");
      require(as_transcripts, "--transcripts");
      cli::AssembleOptions o;
      o.requests = as_requests;
      o.transcripts = as_transcripts;
      if (!as_trace_dir.empty()) o.trace_dir = as_trace_dir;
      o.variant = parse_or_usage(trace::parse_variant(as_feature), "feature", as_feature);
      if (!(as_fraction > 0.0 && as_fraction < 1.0)) {
        throw CLI::ValidationError("--train-fraction", "must be in (0, 1)");
      }
      o.train_fraction = as_fraction;
      o.seed = as_seed;
      o.out_dir = as_out;
      cli::cmd_assemble(o, std::cerr);
    } else if (tr->parsed()) {
      tr_replay.load();
      tr_replay.fill(tr_train_o, "train", tr_train);
      tr_replay.fill(tr_dev_o, "dev", tr_dev);
      tr_replay.fill(tr_hidden_o, "hidden_dims", tr_mlp.hidden_dims);
      tr_replay.fill(tr_drop_o, "dropout", tr_mlp.dropout_rate);
      tr_replay.fill(tr_iseed_o, "init_seed", tr_mlp.seed);
      tr_replay.fill(tr_lr_o, "learning_rate", tr_cfg.learning_rate);
      tr_replay.fill(tr_wd_o, "weight_decay", tr_cfg.weight_decay);
      tr_replay.fill(tr_bs_o, "batch_size", tr_cfg.batch_size);
      tr_replay.fill(tr_ep_o, "max_epochs", tr_cfg.max_epochs);
      tr_replay.fill(tr_pat_o, "patience", tr_cfg.patience);
      tr_replay.fill(tr_seed_o, "seed", tr_cfg.seed);
      tr_replay.fill(tr_out_o, "out_dir", tr_out);
      require(tr_train, "--train");
      require(tr_dev, "--dev");
      cli::TrainOptions o;
      o.train = tr_train;
      o.dev = tr_dev;
      o.mlp = tr_mlp;
      o.train_config = tr_cfg;
      o.out_dir = tr_out;
      cli::cmd_train(o, std::cerr);
    } else if (sc->parsed()) {
      sc_replay.load();
      sc_replay.fill(sc_model_o, "model", sc_model);
      sc_replay.fill(sc_trace_o, "trace", sc_trace);
      sc_replay.fill(sc_trs_o, "transcripts", sc_transcripts);
      sc_replay.fill(sc_mode_o, "mode", sc_mode);
      sc_replay.fill(sc_feat_o, "feature", sc_feature);
      sc_replay.fill(sc_gran_o, "granularity", sc_gran);
      sc_replay.fill(sc_base_o, "baselines", sc_baselines);
      sc_replay.fill(sc_sid_o, "stream_id", sc_stream_id);
      sc_replay.fill(sc_out_o, "out", sc_out);
      require(sc_model, "--model");
      if (sc_trace.empty() == sc_transcripts.empty()) {
        throw CLI::ValidationError("--trace/--transcripts", "give exactly one of them");
      }
      cli::ScoreOptions o;
      o.model = sc_model;
      if (!sc_trace.empty()) o.trace = sc_trace;
      if (!sc_transcripts.empty()) o.transcripts = sc_transcripts;
      if (sc_mode == "stream") {
        o.mode = cli::TraceMode::kStream;
      } else if (sc_mode == "file") {
        o.mode = cli::TraceMode::kFile;
      } else {
        throw CLI::ValidationError("--mode", "unknown value '" + sc_mode + "'");
      }
      if (!sc_feature.empty()) o.variant = parse_or_usage(trace::parse_variant(sc_feature), "feature", sc_feature);
      o.granularity = parse_or_usage(scoring::parse_granularity(sc_gran), "granularity", sc_gran);
      o.baselines = sc_baselines;
      o.stream_id = sc_stream_id;
      if (!sc_out.empty()) o.out = sc_out;
      if (!sc_manifest.empty()) o.manifest = sc_manifest;
      cli::cmd_score(o, std::cin, std::cout, std::cerr);
    } else if (ev->parsed()) {
      ev_replay.load();
      ev_replay.fill(ev_scores_o, "scores", ev_scores);
      ev_replay.fill(ev_labels_o, "labels", ev_labels);
      ev_replay.fill(ev_level_o, "level", ev_level);
      ev_replay.fill(ev_ps_o, "passage_score", ev_pscore);
      ev_replay.fill(ev_model_o, "model_name", ev_model);
      ev_replay.fill(ev_out_o, "out", ev_out);
      require(ev_scores, "--scores");
      require(ev_labels, "--labels");
      cli::EvalOptions o;
      o.scores = ev_scores;
      o.labels = ev_labels;
      o.level = parse_or_usage(eval::parse_level(ev_level), "level", ev_level);
      if (ev_pscore == "max") {
        o.passage_score = eval::PassageScore::kMax;
      } else if (ev_pscore == "mean") {
        o.passage_score = eval::PassageScore::kMean;
      } else {
        throw CLI::ValidationError("--passage-score", "unknown value '" + ev_pscore + "'");
      }
      o.model_name = ev_model;
      if (!ev_out.empty()) o.out = ev_out;
      cli::cmd_eval(o, std::cout);
    } else if (st->parsed()) {
      return cli::cmd_selftest(st_opts, std::cout) ? cli::kOk : cli::kNumericFailure;
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return cli::kNumericFailure;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kDataFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kDataFailure;
  }
  return cli::kOk;
}
