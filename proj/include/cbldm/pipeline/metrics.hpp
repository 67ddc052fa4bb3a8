#pragma once

#include <map>
#include <string>
#include <vector>

#include "cbldm/pdfsim.hpp"
#include "cbldm/pipeline/profile.hpp"
#include "cbldm/structgen.hpp"

namespace cbldm {

// Weighted profile residual between two curves on the same r grid:
//   R_wp = sqrt( sum w (obs - calc)^2 / sum w obs^2 )
// Both curves are max-abs normalized (on copies) before comparison, so the
// metric ignores overall scale. Weights default to all ones. An observed
// curve that is identically zero leaves the metric undefined and throws.
double rwp(const PdfCurve& obs, const PdfCurve& calc,
           const std::vector<double>* weights = nullptr);

// Sorted midpoint median; even counts average the two middles. Empty input
// throws.
double median(std::vector<double> v);

struct EvalRow {
  std::string name;
  StructKind kind = StructKind::NA;
  double rwp = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double median_all = 0;
  std::map<StructKind, double> median_by_kind;
};

// Pairs every *.pdf in truth_dir with the same filename in pred_dir, scores
// each pair on the profile grid, and derives the structure kind from the
// filename prefix (anything before the first '_'; unknown prefixes map to
// NA). Throws when truth_dir has no curves or a prediction is missing.
EvalReport eval_directories(const std::string& pred_dir,
                            const std::string& truth_dir, const Profile& prof);

EvalReport report_from_rows(std::vector<EvalRow> rows);

// TSV: one "name kind rwp" row per pair, then '#'-prefixed median lines that
// restate what the rows imply.
void write_eval_report(const std::string& path, const EvalReport& report);

}  // namespace cbldm
