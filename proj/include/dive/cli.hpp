#pragma once

#include <string>
#include <vector>

#include "dive/eval.hpp"

namespace dive::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Entry point for dive-kit. `args` excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

struct Table {
  std::string text;  // aligned, best cell per row suffixed with '*'
  std::string csv;   // same cells, comma separated
};

// Rows = datasets (first-seen order), columns = methods in the order
// frozen, matryoshka, search_adaptor, smec, dive, then any others in
// first-seen order. Cells are mean±std of nDCG@K over the reports of that
// (dataset, method); std is the sample std (0 for a single run). The best
// mean per row is marked; every cell tied with it at the printed precision
// is marked too. Throws ContractError on an empty report list.
Table emit_table(const std::vector<EvalReport>& reports);

}  // namespace dive::cli
