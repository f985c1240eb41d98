#pragma once

/**
 * Pipeline entry points behind the CLI subcommands: collect all-stage
 * traces, train and tune the classifier, run live policies, replay traces,
 * and emit reports. Episode execution honors a bounded worker count;
 * everything else is sequential.
 */

#include <string>

#include "tandem/config.hpp"
#include "tandem/harness.hpp"
#include "tandem/report.hpp"

namespace tandem::runner {

// All-stage episode collection into the configured trace file. Uses the
// tandem policy when a model file already exists, plain stage-3 collection
// otherwise. Returns the number of recorded episodes.
long cmd_record(const config::RunConfig& cfg, int parallel);

// Trains one MLP per grouping key from the configured traces and writes
// the model file (thresholds start at 0.5 until `tune`).
void cmd_train(const config::RunConfig& cfg);

// Grid-searches per-stage thresholds on the training split (or the
// validation split when configured) and rewrites the model file.
// grid_spec: "lo:hi:step", empty for the 0.05:0.95:0.05 default.
void cmd_tune(const config::RunConfig& cfg, const std::string& grid_spec);

// Live policy execution over the configured dataset; writes results.jsonl
// and metrics under report_dir.
harness::MetricsReport cmd_run(const config::RunConfig& cfg, const std::string& policy, int parallel);

// Offline policy evaluation from recorded traces; same outputs as run.
harness::MetricsReport cmd_replay(const config::RunConfig& cfg, const std::string& policy, int parallel);

// Table-style report from a results file (default report_dir/results.jsonl).
void cmd_report(const config::RunConfig& cfg, const std::string& results_path);

classifier::Grid parse_grid_spec(const std::string& spec);

} // namespace tandem::runner
