#ifndef TANDEM_H
#define TANDEM_H

/*
 * C API for the tandem mentor-intern cascade library.
 *
 * All entry points return a tandem_status; anything but TANDEM_OK leaves a
 * human-readable message in tandem_last_error() (thread-local). Handles are
 * opaque and must be released with their matching _free function.
 */

#include <stddef.h>

#if defined(_WIN32)
#define TANDEM_API __declspec(dllexport)
#else
#define TANDEM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tandem_status {
    TANDEM_OK = 0,
    TANDEM_ERR_USAGE = 1,      /* bad arguments to a call or unknown policy/flag */
    TANDEM_ERR_CONFIG = 2,     /* config file invalid or required paths missing */
    TANDEM_ERR_IO = 3,         /* file unreadable/unwritable */
    TANDEM_ERR_PARSE = 4,      /* malformed dataset/trace/model content */
    TANDEM_ERR_TRANSPORT = 5,  /* backend request failed */
    TANDEM_ERR_CAPABILITY = 6, /* backend lacks a required capability */
    TANDEM_ERR_STATE = 7,      /* stage ordering or budget violated */
    TANDEM_ERR_DATA = 8,       /* empty/degenerate data, missing grades or stages */
    TANDEM_ERR_INTERNAL = 9
} tandem_status;

typedef struct tandem_config tandem_config; /* parsed run configuration */

TANDEM_API const char* tandem_version(void);

/* Message for the most recent failure on this thread ("" when none). */
TANDEM_API const char* tandem_last_error(void);

/* ===== configuration ===== */

TANDEM_API tandem_status tandem_config_load(const char* path, tandem_config** out);
TANDEM_API tandem_status tandem_config_loads(const char* text, tandem_config** out);

/* One dotted-key assignment, value in JSON syntax (e.g. "paths.dataset",
 * "\"questions.jsonl\""). */
TANDEM_API tandem_status tandem_config_set(tandem_config* cfg, const char* dotted_key,
                                           const char* json_value);

/* Canonical dotted-key serialization; free with tandem_string_free. */
TANDEM_API tandem_status tandem_config_dump(const tandem_config* cfg, char** out_text);

TANDEM_API void tandem_config_free(tandem_config* cfg);
TANDEM_API void tandem_string_free(char* text);

/* ===== pipeline commands (mirror the CLI subcommands) ===== */

/* All-stage episode collection into paths.traces. episodes_out may be NULL. */
TANDEM_API tandem_status tandem_record(const tandem_config* cfg, int parallel, long* episodes_out);

/* Classifier training from paths.traces into paths.model_file. */
TANDEM_API tandem_status tandem_train(const tandem_config* cfg);

/* Threshold grid search; grid_spec "lo:hi:step" or NULL for 0.05:0.95:0.05. */
TANDEM_API tandem_status tandem_tune(const tandem_config* cfg, const char* grid_spec);

/* Live execution under a policy ("tandem", "fixed_stage:2", "single:intern",
 * "single:mentor", "budget_forcing:500", "one_shot_router"); writes
 * results.jsonl plus metrics under paths.report_dir. accuracy_out may be
 * NULL. */
TANDEM_API tandem_status tandem_run(const tandem_config* cfg, const char* policy, int parallel,
                                    double* accuracy_out);

/* Offline policy evaluation from paths.traces; same outputs as tandem_run. */
TANDEM_API tandem_status tandem_replay(const tandem_config* cfg, const char* policy, int parallel,
                                       double* accuracy_out);

/* Report tables from a results file (NULL: paths.report_dir/results.jsonl). */
TANDEM_API tandem_status tandem_report(const tandem_config* cfg, const char* results_path);

/* ===== pure helpers ===== */

/* 2/1e12 * (theta_mentor*mentor_tokens + theta_intern*(mentor_tokens +
 * intern_tokens)), in TFLOPs. */
TANDEM_API double tandem_cost_tflops(long long mentor_tokens, long long intern_tokens,
                                     long long theta_mentor, long long theta_intern);

/* 1 correct, 0 incorrect, negative on error. grader: "boxed_math",
 * "numeric", "exact", or "external" (with external_cmd). */
TANDEM_API int tandem_grade_answer(const char* answer, const char* gold, const char* grader,
                                   const char* external_cmd);

#ifdef __cplusplus
}
#endif

#endif /* TANDEM_H */
