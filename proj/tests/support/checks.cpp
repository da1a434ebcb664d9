#include "checks.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "mind/baselines.hpp"
#include "mind/classifier.hpp"
#include "mind/error.hpp"
#include "mind/eval.hpp"
#include "mind/random.hpp"
#include "mind/scoring.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace mind::testing {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Runs `body`, converting an escaped exception into a failed result. A
// positive `time_limit` (seconds) is part of the criterion.
template <typename F>
CheckResult run_check(const char* name, double time_limit, F&& body) {
  CheckResult r;
  r.name = name;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  if (time_limit > 0.0 && r.seconds >= time_limit) {
    r.passed = false;
    r.detail += fmt("; over time limit %.0fs", time_limit);
  }
  return r;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

bool same_bits(const trace::TokenRecord& a, const trace::TokenRecord& b) {
  return a.token_id == b.token_id && a.token_text == b.token_text &&
         std::bit_cast<std::uint32_t>(a.chosen_logprob) == std::bit_cast<std::uint32_t>(b.chosen_logprob) &&
         std::bit_cast<std::uint32_t>(a.entropy) == std::bit_cast<std::uint32_t>(b.entropy) &&
         same_bits(a.hidden, b.hidden);
}

bool same_trace(const trace::TraceHeader& h, std::span<const trace::TokenRecord> recs, const trace::Trace& t) {
  if (!(t.header == h) || t.records.size() != recs.size()) return false;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!same_bits(recs[i], t.records[i])) return false;
  }
  return true;
}

// Awkward but finite bit patterns the codec must carry unchanged.
void sprinkle_specials(std::vector<float>& v, Rng& rng) {
  static constexpr float kSpecials[] = {-0.0f, 0.0f, 1e-40f, -1e-45f, std::numeric_limits<float>::max(),
                                        std::numeric_limits<float>::lowest(), std::numeric_limits<float>::min()};
  for (auto& x : v) {
    if (rng() % 16 == 0) x = kSpecials[uniform_index(rng, std::size(kSpecials))];
  }
}

datagen::LabeledDataset slice(const datagen::LabeledDataset& ds, std::size_t begin, std::size_t end) {
  datagen::LabeledDataset out;
  out.dim = ds.dim;
  out.variant = ds.variant;
  for (std::size_t i = begin; i < end; ++i) out.append(ds.row(i), ds.labels[i]);
  return out;
}

double dev_auc(const classifier::MlpModel& model, const datagen::LabeledDataset& dev) {
  const auto p = classifier::predict_all(model, dev);
  return eval::roc_auc(p, dev.labels);
}

}  // namespace

std::string format_result(const CheckResult& r) {
  return fmt("%s  %-24s %-60s (%.2fs)", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
}

const std::vector<LabelCase>& labeling_truth_table() {
  using enum datagen::LabelOutcome;
  static const std::vector<LabelCase> cases = {
      // entity is a prefix of the continuation
      {"Paris is the capital of France.", "Paris", kNonHallucination},
      {"   Paris is the capital.", "Paris", kNonHallucination},
      {"paris is the capital.", "Paris", kNonHallucination},
      {"PARIS, the capital.", "Paris", kNonHallucination},
      {"New York City is large.", "New York", kNonHallucination},
      {"Paris", "Paris", kNonHallucination},
      {"Parisian food is famous.", "Paris", kNonHallucination},
      {"\tZ\xC3\xBCrich is a city.", "Z\xC3\xBCrich", kNonHallucination},
      // entity absent
      {"London is the capital.", "Paris", kHallucination},
      {"The city is large.", "Paris", kHallucination},
      {"Par is a word.", "Paris", kHallucination},
      {"New Jersey is a state.", "New York", kHallucination},
      {"York is a city.", "New York", kHallucination},
      {"Zurich is a city.", "Z\xC3\xBCrich", kHallucination},
      {"Z\xC3\x9CRICH is a city.", "Z\xC3\xBCrich", kHallucination},  // casefold is ASCII-only
      // present but not at the start
      {"The capital is Paris.", "Paris", kDiscard},
      {"In paris it rains.", "Paris", kDiscard},
      {"It lies near New York.", "New York", kDiscard},
      {"Not Paris but Lyon.", "Paris", kDiscard},
      {" the Parisian streets.", "Paris", kDiscard},
      {"\"Paris\" is a name.", "Paris", kDiscard},
      {"(Paris) is a name.", "Paris", kDiscard},
      // punctuation around the entity is stripped before matching
      {"Paris is old.", "\"Paris\"", kNonHallucination},
      {"Paris is old.", "(Paris)", kNonHallucination},
      {"Paris. It is old.", "Paris.", kNonHallucination},
      {"u.s. troops arrived.", "U.S.", kNonHallucination},
      {"Paris is old.", "\xC2\xA1Paris!", kNonHallucination},
      {"Paris is old.", "\xE2\x80\x9CParis\xE2\x80\x9D", kNonHallucination},
      {"London is old.", "Paris,", kHallucination},
      {"paris is old.", "  Paris  ", kNonHallucination},
  };
  return cases;
}

FeatureFixture feature_fixture() {
  FeatureFixture f;
  f.header = {"fixture", 2, 2, {1, 2}, true, true};
  // hidden = [layer 1 | layer 2]
  f.records.push_back({1, "a", -0.1f, 0.5f, {1, 0, 2, 0}});
  f.records.push_back({2, "b", -0.2f, 0.5f, {0, 1, 0, 2}});
  f.expected = {{0.75f, 0.75f}, {1.5f, 1.5f}, {1.0f, 1.0f}, {0.5f, 0.5f},
                {0.0f, 2.0f},   {0.0f, 1.5f}, {0.5f, 1.5f}};
  return f;
}

CheckResult check_gradient_fidelity() {
  return run_check("gradient_fidelity", 5.0, [](CheckResult& r) {
    classifier::MlpConfig cfg;
    cfg.input_dim = 8;
    const auto res = gradient_check(cfg, 100, 1e-5, 11, 1e-4, 400);
    r.passed = res.cases == 100 && res.max_relative_error <= 1e-4;
    r.detail = fmt("max rel err %.3e over %zu params, %zu cases (<= 1e-4)", res.max_relative_error,
                   res.parameters_checked, res.cases);
  });
}

CheckResult check_synthetic_separability() {
  return run_check("synthetic_separability", 120.0, [](CheckResult& r) {
    const auto all = gaussian_dataset(64, 5120, 0.5, 2024);
    const auto train_set = slice(all, 0, 4096);
    const auto dev_set = slice(all, 4096, 5120);
    classifier::MlpConfig cfg;
    cfg.input_dim = 64;
    cfg.seed = 1;
    classifier::TrainConfig tc;
    tc.seed = 2;

    const auto fit = classifier::train(classifier::init_model(cfg), train_set, dev_set, tc);
    const double acc = classifier::accuracy(fit.model, dev_set);
    const double auc = dev_auc(fit.model, dev_set);

    const auto control =
        classifier::train(classifier::init_model(cfg), shuffle_labels(train_set, 3), shuffle_labels(dev_set, 4), tc);
    const double control_acc = control.model.metadata.best_dev_accuracy;

    r.passed = acc >= 0.99 && auc >= 0.999 && control_acc >= 0.45 && control_acc <= 0.55;
    r.detail = fmt("dev acc %.4f auc %.5f (%zu ep); shuffled acc %.4f (%zu ep)", acc, auc,
                   fit.model.metadata.epochs_run, control_acc, control.model.metadata.epochs_run);
  });
}

CheckResult check_auc_oracle(std::size_t instances) {
  return run_check("auc_oracle", 0.0, [instances](CheckResult& r) {
    const std::vector<double> fs{0.9, 0.8, 0.3, 0.2};
    const std::vector<std::uint8_t> fl{1, 0, 1, 0};
    const double fixture = eval::roc_auc(fs, fl);
    std::size_t mismatches = 0, with_ties = 0;
    Rng rng(99);
    for (std::size_t k = 0; k < instances; ++k) {
      const auto n = 2 + uniform_index(rng, 199);
      // Few distinct levels in some instances force heavy ties.
      const auto levels = (k % 3 == 0) ? 1 + uniform_index(rng, 5) : 0;
      std::vector<double> s(n);
      std::vector<std::uint8_t> l(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = levels ? static_cast<double>(uniform_index(rng, levels)) : std::round(uniform(rng, -5, 5) * 10) / 10;
        l[i] = static_cast<std::uint8_t>(rng() & 1);
      }
      l[0] = 0;
      l[1] = 1;
      auto sorted = s;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) ++with_ties;
      if (eval::roc_auc(s, l) != auc_pair_count(s, l)) ++mismatches;
    }
    r.passed = fixture == 0.75 && mismatches == 0;
    r.detail = fmt("fixture %.6g (0.75); %zu/%zu exact matches, %zu with ties", fixture, instances - mismatches,
                   instances, with_ties);
  });
}

CheckResult check_entropy_analytics() {
  return run_check("entropy_analytics", 0.0, [](CheckResult& r) {
    double worst = 0.0;
    bool one_hot_zero = true;
    for (std::size_t k = 2; k <= 1024; ++k) {
      const std::vector<double> uniform_dist(k, 1.0 / static_cast<double>(k));
      worst = std::max(worst, std::abs(baselines::token_entropy(uniform_dist) - std::log(static_cast<double>(k))));
      std::vector<double> one_hot(k, 0.0);
      one_hot[k / 3] = 1.0;
      one_hot_zero = one_hot_zero && baselines::token_entropy(one_hot) == 0.0;
    }
    r.passed = worst <= 1e-9 && one_hot_zero;
    r.detail = fmt("max |H(uniform k) - ln k| %.3e (<= 1e-9), one-hot exactly 0: %s", worst,
                   one_hot_zero ? "yes" : "no");
  });
}

CheckResult check_feature_fixtures(std::size_t stream_tokens) {
  return run_check("feature_fixtures", 0.0, [stream_tokens](CheckResult& r) {
    const auto fx = feature_fixture();
    std::size_t exact = 0;
    for (std::size_t v = 0; v < std::size(trace::kAllVariants); ++v) {
      const auto variant = trace::kAllVariants[v];
      const auto batch = trace::extract_features(fx.header, fx.records, variant);
      trace::FeatureAccumulator acc(fx.header, variant);
      for (const auto& rec : fx.records) acc.push(rec);
      if (batch.values == fx.expected[v] && acc.snapshot().values == fx.expected[v]) ++exact;
    }

    Rng rng(5);
    const trace::TraceHeader h{"stream", 6, 24, {1, 2, 3, 4, 5, 6}, true, true};
    const auto recs = random_records(h, stream_tokens, rng);
    const std::size_t checkpoints[] = {1, 2, 17, stream_tokens / 2, stream_tokens};
    double worst = 0.0;
    for (const auto variant : trace::kAllVariants) {
      trace::FeatureAccumulator acc(h, variant);
      std::size_t pushed = 0;
      for (const auto k : checkpoints) {
        for (; pushed < k; ++pushed) acc.push(recs[pushed]);
        const auto s = acc.snapshot().values;
        const auto b = trace::extract_features(h, std::span(recs).first(k), variant).values;
        for (std::size_t i = 0; i < b.size(); ++i) {
          worst = std::max(worst, std::abs(double(s[i]) - b[i]) / std::max(1.0, std::abs(double(b[i]))));
        }
      }
    }
    r.passed = exact == std::size(trace::kAllVariants) && worst <= 1e-5;
    r.detail = fmt("%zu/7 variants exact on 2x2 example; stream vs batch max err %.2e over %zu tokens (<= 1e-5)",
                   exact, worst, stream_tokens);
  });
}

CheckResult check_labeling_truth_table() {
  return run_check("labeling_truth_table", 0.0, [](CheckResult& r) {
    const auto& cases = labeling_truth_table();
    std::size_t agree = 0;
    std::string first_bad;
    for (const auto& c : cases) {
      if (datagen::label_continuation(c.continuation, c.entity) == c.expected) {
        ++agree;
      } else if (first_bad.empty()) {
        first_bad = "; first disagreement: '" + c.continuation + "' / '" + c.entity + "'";
      }
    }
    r.passed = agree == cases.size() && cases.size() == 30;
    r.detail = fmt("%zu/%zu cases agree", agree, cases.size()) + first_bad;
  });
}

CheckResult check_codec_roundtrip(std::size_t cases) {
  return run_check("codec_roundtrip", 0.0, [cases](CheckResult& r) {
    const auto dir = std::filesystem::temp_directory_path() / fmt("mind-codec-%llx", (unsigned long long)fnv1a64(
                                                                       std::to_string(Clock::now().time_since_epoch().count())));
    std::filesystem::create_directories(dir);
    Rng rng(424242);
    std::size_t trace_ok = 0, model_ok = 0, files = 0;
    for (std::size_t c = 0; c < cases; ++c) {
      const bool via_file = c % 100 == 0;
      files += via_file;

      // Trace
      const auto h = random_header(rng);
      auto recs = random_records(h, uniform_index(rng, 8), rng);
      for (auto& rec : recs) sprinkle_specials(rec.hidden, rng);
      const bool marker = rng() & 1;
      const auto bytes = trace::encode_trace(h, recs, marker);
      bool ok = same_trace(h, recs, trace::decode_trace(bytes));
      if (via_file) {
        const auto path = dir / "t.mndt";
        trace::write_trace(path, h, recs);
        ok = ok && same_trace(h, recs, trace::read_trace(path));
      }
      trace_ok += ok;

      // Model
      classifier::MlpConfig cfg;
      cfg.input_dim = 1 + uniform_index(rng, 12);
      cfg.hidden_dims.resize(1 + uniform_index(rng, 3));
      for (auto& d : cfg.hidden_dims) d = 1 + uniform_index(rng, 10);
      cfg.dropout_rate = uniform(rng, 0.0, 0.9);
      cfg.seed = rng();
      auto model = classifier::init_model(cfg);
      for (auto& layer : model.net.layers()) {
        for (auto& w : layer.weight) w = static_cast<float>(normal(rng, 0.0, 2.0));
        for (auto& b : layer.bias) b = static_cast<float>(normal(rng, 0.0, 2.0));
        sprinkle_specials(layer.weight, rng);
        sprinkle_specials(layer.bias, rng);
      }
      model.metadata.epochs_run = uniform_index(rng, 50);
      model.metadata.best_dev_accuracy = uniform01(rng);
      model.metadata.feature_variant = std::string(trace::variant_name(trace::kAllVariants[uniform_index(rng, 7)]));
      if (rng() & 1) model.metadata.train_config = classifier::TrainConfig{};

      const auto mbytes = classifier::encode_model(model);
      const auto back = via_file ? (classifier::save_model(model, dir / "m.mndm"), classifier::load_model(dir / "m.mndm"))
                                 : classifier::decode_model(mbytes);
      bool mok = back.config == model.config && classifier::encode_model(back) == mbytes &&
                 back.net.layers().size() == model.net.layers().size();
      for (std::size_t i = 0; mok && i < back.net.layers().size(); ++i) {
        mok = same_bits(back.net.layers()[i].weight, model.net.layers()[i].weight) &&
              same_bits(back.net.layers()[i].bias, model.net.layers()[i].bias);
      }
      model_ok += mok;
    }
    std::filesystem::remove_all(dir);
    r.passed = trace_ok == cases && model_ok == cases;
    r.detail = fmt("trace %zu/%zu, model %zu/%zu bit-exact (%zu via files)", trace_ok, cases, model_ok, cases, files);
  });
}

namespace {

struct PipelineOutput {
  std::size_t requests = 0;
  std::size_t tuples = 0;
  std::string model_bytes;
  std::string scores;
  std::string report;
  double auc = 0.0;
};

PipelineOutput run_mock_pipeline(std::size_t n_articles, std::uint64_t seed) {
  PipelineOutput out;
  const auto articles = synthetic_corpus(n_articles, seed);
  const auto batch = datagen::build_generation_requests(articles, nullptr, datagen::PromptMode::kBase, seed);
  out.requests = batch.requests.size();

  MockGenerator gen;
  gen.seed = seed;
  const auto generated = gen.run(batch.requests);
  std::map<std::string, const trace::Trace*> by_ref;
  for (std::size_t i = 0; i < generated.transcripts.size(); ++i) {
    by_ref[generated.transcripts[i].trace_ref] = &generated.traces[i];
  }
  const datagen::TraceLoader loader = [&](const std::string& ref) {
    const auto it = by_ref.find(ref);
    if (it == by_ref.end()) throw DataError("no trace " + ref);
    return *it->second;
  };

  const auto labeled = datagen::label_transcripts(batch.requests, generated.transcripts, loader);
  out.tuples = labeled.tuples.size();
  const auto ds = datagen::assemble_dataset(labeled.tuples, trace::kDefaultVariant, loader);
  const auto [train_set, dev_set] = datagen::split_dataset(ds, 0.8, seed);

  classifier::MlpConfig cfg;
  cfg.input_dim = ds.dim;
  cfg.seed = seed;
  classifier::TrainConfig tc;
  tc.seed = seed;
  const auto fit = classifier::train(classifier::init_model(cfg), train_set, dev_set, tc);
  out.model_bytes = classifier::encode_model(fit.model);

  std::vector<eval::ScoredUnit> units;
  for (const auto& t : labeled.tuples) {
    scoring::ScorerOptions so;
    so.baselines = true;
    so.stream_id = t.request_id;
    const auto& tr = loader(t.trace_ref);
    scoring::StreamingScorer scorer(fit.model, tr.header, so);
    const auto sink = [&](const scoring::ScoreEvent& ev) {
      out.scores += scoring::event_to_jsonl(ev);
      if (ev.sentence_index == 0) units.push_back({ev.unit_id, t.article_id, 0, ev.score, t.label});
    };
    for (const auto& rec : tr.records) scorer.push(rec, sink);
    scorer.finish(sink);
  }
  const auto report = eval::evaluate(units, eval::Level::kSentence);
  out.auc = report.auc;
  out.report = eval::report_to_json(report, "MIND") + eval::report_to_json(eval::evaluate(units, eval::Level::kPassage), "MIND");
  return out;
}

}  // namespace

CheckResult check_end_to_end(std::size_t articles) {
  return run_check("end_to_end_pipeline", 300.0, [articles](CheckResult& r) {
    const auto a = run_mock_pipeline(articles, 17);
    const auto b = run_mock_pipeline(articles, 17);
    const bool deterministic = a.model_bytes == b.model_bytes && a.scores == b.scores && a.report == b.report;
    r.passed = deterministic && a.tuples > 0 && a.auc >= 0.9;
    r.detail = fmt("%zu requests, %zu labeled, sentence AUC %.4f, rerun identical: %s", a.requests, a.tuples, a.auc,
                   deterministic ? "yes" : "no");
  });
}

CheckResult check_realtime_budget(std::size_t hidden_dim, std::size_t tokens) {
  return run_check("realtime_budget", 0.0, [hidden_dim, tokens](CheckResult& r) {
    Rng rng(8192);
    const trace::TraceHeader h{"bench", 32, static_cast<std::uint32_t>(hidden_dim), {32}, true, true};
    std::vector<std::string> texts;
    while (texts.size() < tokens) {
      for (auto& t : tokenize(random_text(rng, 200) + " ")) texts.push_back(std::move(t));
    }
    texts.resize(tokens);
    std::vector<trace::TokenRecord> recs(tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
      recs[i].token_id = static_cast<std::uint32_t>(i);
      recs[i].token_text = texts[i];
      recs[i].chosen_logprob = -static_cast<float>(uniform(rng, 0.0, 5.0));
      recs[i].entropy = static_cast<float>(uniform(rng, 0.0, 5.0));
      recs[i].hidden.resize(hidden_dim);
      for (auto& v : recs[i].hidden) v = static_cast<float>(normal(rng));
    }
    classifier::MlpConfig cfg;
    cfg.input_dim = hidden_dim;
    const auto model = classifier::init_model(cfg);

    scoring::ScorerOptions so;
    so.baselines = true;
    std::size_t events = 0, bytes = 0;
    const auto sink = [&](const scoring::ScoreEvent& ev) {
      bytes += scoring::event_to_jsonl(ev).size();
      ++events;
    };
    const auto t0 = Clock::now();
    scoring::StreamingScorer scorer(model, h, so);
    for (const auto& rec : recs) scorer.push(rec, sink);
    scorer.finish(sink);
    const double ms_per_token = seconds_since(t0) * 1e3 / static_cast<double>(tokens);
    r.passed = ms_per_token <= 0.5 && events > 1 && bytes > 0;
    r.detail = fmt("%.4f ms/token at d=%zu over %zu tokens, %zu sentence events (<= 0.5)", ms_per_token, hidden_dim,
                   tokens, events);
  });
}

}  // namespace mind::testing
