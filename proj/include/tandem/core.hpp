#pragma once

/**
 * Domain types shared by every module, plus insight-composition primitives.
 *
 * The mentor's reasoning is one logical token stream per question; effort
 * stages are budget-bounded prefixes of that stream. All types here are
 * immutable values after construction and safe to share across workers.
 */

#include <array>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tandem/error.hpp"

namespace tandem::core {

enum class Dataset { math, gsm8k, humaneval, custom };

const char* dataset_name(Dataset d);
Dataset dataset_from_name(std::string_view name);

struct Question {
    std::string id;
    std::string text;
    std::string gold_answer;
    std::string subject; // optional grouping key
    Dataset dataset = Dataset::custom;
};

enum class StageLabel { question_only, low, medium, high };

const char* stage_label_name(StageLabel l);

struct EffortStage {
    int index = 0; // 0..3
    StageLabel label = StageLabel::question_only;
    long cumulative_budget_tokens = 0;
};

// The four-stage effort ladder. Stage 0 always has budget 0; the three
// mentor budgets must be positive and strictly increasing.
class StageLadder {
public:
    static StageLadder from_budgets(const std::vector<long>& budgets);

    const EffortStage& at(int index) const;
    const std::array<EffortStage, 4>& stages() const { return stages_; }
    std::vector<long> budgets() const;

private:
    std::array<EffortStage, 4> stages_{};
};

// One appended piece of the mentor stream. A piece usually holds a single
// token, but a backend that only reports bulk text plus a token count may
// append a multi-token chunk; `tokens_so_far` is cumulative either way.
struct StreamPiece {
    std::string text;
    long tokens_so_far = 0;
};

class InsightStream {
public:
    InsightStream() = default;
    explicit InsightStream(std::string question_id) : question_id_(std::move(question_id)) {}

    const std::string& question_id() const { return question_id_; }
    const std::vector<StreamPiece>& pieces() const { return pieces_; }
    const std::map<int, long>& stage_boundaries() const { return boundaries_; }

    long token_count() const;
    int recorded_stages() const { return static_cast<int>(boundaries_.size()); }
    bool has_stage(int index) const { return index == 0 || boundaries_.count(index) > 0; }
    long stage_prefix_tokens(int index) const;

    std::string text() const;
    // Concatenated text of the stage-t prefix; "" for stage 0.
    std::string stage_text(int index) const;

    friend InsightStream append_insights(const InsightStream& prev,
                                         const std::vector<std::string>& delta_tokens,
                                         const EffortStage& stage);
    friend InsightStream append_insight_chunk(const InsightStream& prev, std::string_view text,
                                              long token_count, const EffortStage& stage);

private:
    std::string question_id_;
    std::vector<StreamPiece> pieces_;
    std::map<int, long> boundaries_; // stage index -> prefix length in tokens
};

// Extends the stream with the stage-t delta and records the stage boundary
// at the new length. The previous stream is an exact prefix of the result.
InsightStream append_insights(const InsightStream& prev, const std::vector<std::string>& delta_tokens,
                              const EffortStage& stage);

// Same contract, for backends that report text plus a token count instead
// of a token list. token_count may be 0 (mentor finished in a prior stage).
InsightStream append_insight_chunk(const InsightStream& prev, std::string_view text, long token_count,
                                   const EffortStage& stage);

/**
 * Plain-text template with {{question}} / {{insights}} placeholders.
 * An optional {{#insights}}...{{/insights}} section is dropped entirely
 * when the insight text is empty, so stage-0 prompts carry no insight
 * block at all.
 */
struct PromptTemplate {
    std::string text;

    static PromptTemplate from_file(const std::string& path);
    std::string render(std::string_view question, std::string_view insights) const;
};

// Shipped defaults: the structured Goal/Planning/Retrieval/Action system
// prompt for the mentor and a minimal answer prompt for the intern. The
// same texts live under assets/prompts/ for operators who want to edit them.
const PromptTemplate& default_insight_template();
const PromptTemplate& default_answer_template();

long whitespace_token_count(std::string_view text);

// (count, exact): `exact` is false when the counter is the documented
// whitespace fallback rather than the serving backend's own tokenizer.
using TokenCounter = std::function<std::pair<long, bool>(std::string_view)>;

struct SlmInput {
    std::string question_id;
    EffortStage stage;
    std::string rendered_text; // Q ⊕ I^t under the answer template
    long token_count = 0;      // n
    bool token_count_exact = true;
};

// Pure function of its arguments: substitutes the question text and the
// stage-t insight prefix into the template.
SlmInput build_slm_input(const Question& q, const InsightStream& stream, const EffortStage& stage,
                         const PromptTemplate& tmpl, const TokenCounter& counter = {});

} // namespace tandem::core
