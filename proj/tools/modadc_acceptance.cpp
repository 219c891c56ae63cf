// Runs the acceptance checklist. With no arguments every criterion runs in
// order; otherwise each argument is a 1-based criterion id. Exit status is
// the number of failed criteria.
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include "modadc/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    try {
      ids.push_back(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::fprintf(stderr, "not a criterion id: %s (valid: 1..%d)\n", argv[i],
                   modadc::criterion_count());
      return 1;
    }
  }
  try {
    return modadc::run_acceptance(ids);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
