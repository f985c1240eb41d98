#pragma once

/**
 * Run configuration: one structured text file of dotted-key assignments
 * with JSON values, e.g.
 *
 *   models.mentor.name = "deepseek-32b"
 *   models.mentor.param_count = 32000000000
 *   budgets = [100, 500, 1000]
 *   flags.allow_stage0_exit = false
 *   paths.dataset = "questions.jsonl"
 *
 * '#' starts a comment. Unknown keys are rejected. serialize(parse(file))
 * is semantically identical to the file.
 */

#include <optional>
#include <string>
#include <vector>

#include "tandem/backend.hpp"
#include "tandem/classifier.hpp"

namespace tandem::config {

struct RunConfig {
    backend::ModelSpec mentor;
    backend::ModelSpec intern;
    std::vector<long> budgets{100, 500, 1000};
    std::optional<classifier::ThresholdSet> thresholds; // usually carried by the model file instead

    classifier::TrainHyper hyper;
    std::string grouping = "unified"; // or "per_subject"
    bool tune_on_validation = false;  // tune thresholds on the 30% split instead of the 70%

    bool allow_stage0_exit = false;
    bool all_stage_recording = true;
    int top_k = 20;

    std::string dataset_path;
    std::string traces_path;
    std::string model_file;
    std::string report_dir;

    std::string dataset_format = "custom";
    std::string grader = "auto"; // auto derives from the dataset format
    std::string grader_cmd;      // external grader command
    double router_threshold = 0.5;
    std::string insight_template_path; // built-in defaults when empty
    std::string answer_template_path;
    int parallel = 1;
    long limit = 0; // 0 = whole dataset

    core::StageLadder ladder() const { return core::StageLadder::from_budgets(budgets); }
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config_file(const std::string& path);

// Canonical dotted-key form; parse(dump(cfg)) == cfg.
std::string dump_config(const RunConfig& cfg);

// Applies one dotted-key assignment (value in JSON syntax) on top of an
// existing config; used for CLI flag overrides.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& json_value);

bool config_equal(const RunConfig& a, const RunConfig& b);

} // namespace tandem::config
