#pragma once

/**
 * Result files and report tables. `run` and `replay` write one results
 * line per episode plus a metrics summary; `report` turns a results file
 * into aligned plain-text tables and a machine-readable table.json.
 */

#include <string>
#include <vector>

#include "tandem/harness.hpp"

namespace tandem::report {

std::string episode_to_jsonl(const cascade::GradedEpisode& episode);
cascade::GradedEpisode episode_from_json_line(const std::string& line);

void write_results(const std::string& path, const std::vector<cascade::GradedEpisode>& episodes);
std::vector<cascade::GradedEpisode> read_results(const std::string& path);

std::string render_metrics_text(const harness::MetricsReport& metrics);
std::string render_metrics_json(const harness::MetricsReport& metrics);

// results.jsonl + metrics.json + metrics.txt under report_dir.
harness::MetricsReport write_run_outputs(const std::string& report_dir,
                                         const std::vector<cascade::GradedEpisode>& episodes);

// table.txt + table.json under report_dir: accuracy/length/cost (overall
// and per subject), dollar cost per 1k samples when priced, per-stage
// classifier precision/recall/F1, stage distribution, and the routing
// taxonomy when all-stage grades are available.
void write_report(const std::string& report_dir, const std::vector<cascade::GradedEpisode>& episodes);

} // namespace tandem::report
