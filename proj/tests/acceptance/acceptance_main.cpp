// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is non-zero if any criterion fails.

#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <vector>

#include "checks.hpp"

int main(int argc, char** argv) {
  using namespace mind::testing;
  // Optional substring filter on check names.
  const char* only = argc > 1 ? argv[1] : nullptr;

  const std::vector<std::pair<const char*, std::function<CheckResult()>>> criteria = {
      {"gradient_fidelity", [] { return check_gradient_fidelity(); }},
      {"synthetic_separability", [] { return check_synthetic_separability(); }},
      {"auc_oracle", [] { return check_auc_oracle(1000); }},
      {"entropy_analytics", [] { return check_entropy_analytics(); }},
      {"feature_fixtures", [] { return check_feature_fixtures(10000); }},
      {"labeling_truth_table", [] { return check_labeling_truth_table(); }},
      {"codec_roundtrip", [] { return check_codec_roundtrip(10000); }},
      {"end_to_end_pipeline", [] { return check_end_to_end(400); }},
      {"realtime_budget", [] { return check_realtime_budget(8192, 2000); }},
  };

  int failed = 0, run = 0;
  for (const auto& [name, fn] : criteria) {
    if (only && !std::strstr(name, only)) continue;
    const auto r = fn();
    std::cout << format_result(r) << std::endl;
    failed += !r.passed;
    ++run;
  }
  std::cout << (failed ? "acceptance: FAILED " : "acceptance: ok ") << run - failed << "/" << run << std::endl;
  return failed ? 1 : 0;
}
