#pragma once

#include <string>
#include <vector>

namespace modadc {

// One end-to-end verification item. The tolerances live in the
// implementation; detail carries the measured numbers behind the verdict.
struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

int criterion_count();

// ids are 1-based; throws on an unknown id
CriterionResult run_criterion(int id);

// Runs the listed criteria (all of them when empty), printing one
// PASS/FAIL line each, and returns the results in run order.
std::vector<CriterionResult> run_criteria(const std::vector<int>& ids);

// run_criteria reduced to its failure count.
int run_acceptance(const std::vector<int>& ids);

}  // namespace modadc
