#include "mind/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mind/error.hpp"

namespace mind::eval {

std::string_view level_name(Level l) { return l == Level::kSentence ? "sentence" : "passage"; }

std::optional<Level> parse_level(std::string_view name) {
  if (name == "sentence") return Level::kSentence;
  if (name == "passage") return Level::kPassage;
  return std::nullopt;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
  const auto n = scores.size();
  std::size_t n_pos = 0;
  for (auto l : labels) {
    if (l > 1) throw DataError("auc: labels must be 0 or 1");
    n_pos += l;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: both classes must be present");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError("auc: non-finite score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum keeps tied average ranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_avg_rank = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) twice_rank_sum += twice_avg_rank;
    }
    i = j;
  }
  // 2U = 2R - n_pos (n_pos + 1); U counts pairs with ties as one half.
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return (static_cast<double>(twice_u) / 2.0) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) throw DataError("pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::vector<double> y(labels.begin(), labels.end());
  return pearson(scores, y);
}

std::vector<ScoredUnit> passage_aggregate(std::span<const ScoredUnit> units, PassageScore mode) {
  if (units.empty()) throw DataError("passage_aggregate: no sentences");
  std::vector<ScoredUnit> out;
  std::vector<std::size_t> counts;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& u : units) {
    const auto [it, inserted] = index.emplace(u.passage_id, out.size());
    if (inserted) {
      out.push_back({u.passage_id, u.passage_id, 0, u.score, u.label});
      counts.push_back(1);
      continue;
    }
    auto& p = out[it->second];
    p.label = static_cast<std::uint8_t>(p.label | u.label);
    p.score = mode == PassageScore::kMax ? std::max(p.score, u.score) : p.score + u.score;
    ++counts[it->second];
  }
  if (mode == PassageScore::kMean) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i].score /= static_cast<double>(counts[i]);
  }
  return out;
}

EvalReport evaluate(std::span<const ScoredUnit> units, Level level, PassageScore mode) {
  if (units.empty()) throw DataError("evaluate: no units");
  std::vector<ScoredUnit> aggregated;
  if (level == Level::kPassage) {
    aggregated = passage_aggregate(units, mode);
    units = aggregated;
  }
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& u : units) {
    scores.push_back(u.score);
    labels.push_back(u.label);
  }
  EvalReport r;
  r.level = level;
  r.n_units = units.size();
  r.n_positive = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  r.n_negative = r.n_units - r.n_positive;
  r.auc = roc_auc(scores, labels);
  r.corr = pearson(scores, labels);
  return r;
}

std::string report_to_json(const EvalReport& report, std::string_view method) {
  nlohmann::ordered_json j;
  if (!method.empty()) j["method"] = method;
  j["level"] = level_name(report.level);
  j["auc"] = report.auc;
  j["corr"] = report.corr;
  j["n_units"] = report.n_units;
  j["n_positive"] = report.n_positive;
  j["n_negative"] = report.n_negative;
  return j.dump();
}

std::string render_table(std::span<const TableRow> rows) {
  std::vector<std::string> methods, models;
  std::map<std::pair<std::string, std::string>, const TableRow*> cell;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    cell[{r.method, r.model}] = &r;
  }
  std::size_t method_w = 6;
  for (const auto& m : methods) method_w = std::max(method_w, m.size());
  std::vector<std::size_t> model_w;
  for (const auto& m : models) model_w.push_back(std::max<std::size_t>(m.size(), 15));

  std::string out;
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  out += pad("Method", method_w);
  for (std::size_t i = 0; i < models.size(); ++i) out += " | " + pad(models[i], model_w[i]);
  out += '\n';
  out += std::string(method_w, ' ');
  for (std::size_t i = 0; i < models.size(); ++i) out += " | " + pad("AUC     Corr", model_w[i]);
  out += '\n';
  out += std::string(method_w, '-');
  for (std::size_t i = 0; i < models.size(); ++i) out += "-+-" + std::string(model_w[i], '-');
  out += '\n';
  for (const auto& m : methods) {
    out += pad(m, method_w);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto it = cell.find({m, models[i]});
      char buf[64] = "-";
      if (it != cell.end()) std::snprintf(buf, sizeof buf, "%.4f  %7.4f", it->second->auc, it->second->corr);
      out += " | " + pad(buf, model_w[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace mind::eval
