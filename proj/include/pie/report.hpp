#ifndef PIE_REPORT_HPP_
#define PIE_REPORT_HPP_

#include <string>
#include <vector>

#include "pie/eval.hpp"

namespace pie {

struct NamedReport {
  std::string name;
  EvalReport report;
};

/// Combined CSV: one row per report with rank-1/5/10/20 and mAP, values
/// echoed from the reports without re-computation.
void write_summary_csv(const std::vector<NamedReport>& reports,
                       const std::string& path);

/// CMC comparison rendered as a self-contained SVG line plot.
void write_cmc_svg(const std::vector<NamedReport>& reports,
                   const std::string& path);

/// Reads every `<label>.report.csv` / `<label>.cmc.csv` pair in a
/// directory and emits summary.csv and cmc.svg next to out_csv.
void emit_report_from_dir(const std::string& in_dir,
                          const std::string& out_csv);

}  // namespace pie

#endif  // PIE_REPORT_HPP_
