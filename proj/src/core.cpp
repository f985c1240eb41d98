#include "tandem/core.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace tandem::core {

const char* dataset_name(Dataset d) {
    switch (d) {
        case Dataset::math: return "math";
        case Dataset::gsm8k: return "gsm8k";
        case Dataset::humaneval: return "humaneval";
        case Dataset::custom: return "custom";
    }
    return "custom";
}

Dataset dataset_from_name(std::string_view name) {
    if (name == "math") return Dataset::math;
    if (name == "gsm8k") return Dataset::gsm8k;
    if (name == "humaneval") return Dataset::humaneval;
    if (name == "custom") return Dataset::custom;
    fail(Errc::unknown_format, "unknown dataset format '" + std::string(name) + "'");
}

const char* stage_label_name(StageLabel l) {
    switch (l) {
        case StageLabel::question_only: return "question_only";
        case StageLabel::low: return "low";
        case StageLabel::medium: return "medium";
        case StageLabel::high: return "high";
    }
    return "question_only";
}

StageLadder StageLadder::from_budgets(const std::vector<long>& budgets) {
    if (budgets.size() != 3)
        fail(Errc::config_error, "expected exactly 3 stage budgets, got " + std::to_string(budgets.size()));
    long prev = 0;
    for (long b : budgets) {
        if (b <= prev)
            fail(Errc::config_error, "stage budgets must be positive and strictly increasing");
        prev = b;
    }
    StageLadder ladder;
    ladder.stages_[0] = {0, StageLabel::question_only, 0};
    ladder.stages_[1] = {1, StageLabel::low, budgets[0]};
    ladder.stages_[2] = {2, StageLabel::medium, budgets[1]};
    ladder.stages_[3] = {3, StageLabel::high, budgets[2]};
    return ladder;
}

const EffortStage& StageLadder::at(int index) const {
    if (index < 0 || index > 3)
        fail(Errc::config_error, "stage index out of range: " + std::to_string(index));
    return stages_[static_cast<size_t>(index)];
}

std::vector<long> StageLadder::budgets() const {
    return {stages_[1].cumulative_budget_tokens, stages_[2].cumulative_budget_tokens,
            stages_[3].cumulative_budget_tokens};
}

long InsightStream::token_count() const {
    return pieces_.empty() ? 0 : pieces_.back().tokens_so_far;
}

long InsightStream::stage_prefix_tokens(int index) const {
    if (index == 0) return 0;
    auto it = boundaries_.find(index);
    if (it == boundaries_.end())
        fail(Errc::missing_stage_boundary, "no boundary recorded for stage " + std::to_string(index));
    return it->second;
}

std::string InsightStream::text() const {
    std::string out;
    for (const auto& p : pieces_) out += p.text;
    return out;
}

std::string InsightStream::stage_text(int index) const {
    long limit = stage_prefix_tokens(index);
    std::string out;
    for (const auto& p : pieces_) {
        if (p.tokens_so_far > limit) break;
        out += p.text;
    }
    return out;
}

namespace {

void check_stage_order(const InsightStream& prev, const EffortStage& stage) {
    int expected = prev.recorded_stages() + 1;
    if (stage.index != expected)
        fail(Errc::stage_out_of_order, "expected stage " + std::to_string(expected) + ", got stage " +
                                           std::to_string(stage.index));
}

void check_budget(const InsightStream& prev, long delta, const EffortStage& stage) {
    long total = prev.token_count() + delta;
    if (total > stage.cumulative_budget_tokens)
        fail(Errc::budget_exceeded, std::to_string(total) + " tokens would exceed the stage-" +
                                        std::to_string(stage.index) + " budget of " +
                                        std::to_string(stage.cumulative_budget_tokens));
}

} // namespace

InsightStream append_insights(const InsightStream& prev, const std::vector<std::string>& delta_tokens,
                              const EffortStage& stage) {
    check_stage_order(prev, stage);
    check_budget(prev, static_cast<long>(delta_tokens.size()), stage);

    InsightStream next = prev;
    long count = prev.token_count();
    for (const auto& tok : delta_tokens) {
        ++count;
        next.pieces_.push_back({tok, count});
    }
    next.boundaries_[stage.index] = count;
    return next;
}

InsightStream append_insight_chunk(const InsightStream& prev, std::string_view text, long token_count,
                                   const EffortStage& stage) {
    if (token_count < 0) fail(Errc::budget_exceeded, "negative token count");
    check_stage_order(prev, stage);
    check_budget(prev, token_count, stage);

    InsightStream next = prev;
    long count = prev.token_count() + token_count;
    if (token_count > 0) next.pieces_.push_back({std::string(text), count});
    next.boundaries_[stage.index] = count;
    return next;
}

PromptTemplate PromptTemplate::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot read prompt template '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return PromptTemplate{ss.str()};
}

namespace {

void replace_all(std::string& s, std::string_view what, std::string_view with) {
    size_t pos = 0;
    while ((pos = s.find(what, pos)) != std::string::npos) {
        s.replace(pos, what.size(), with);
        pos += with.size();
    }
}

} // namespace

std::string PromptTemplate::render(std::string_view question, std::string_view insights) const {
    static constexpr std::string_view kOpen = "{{#insights}}";
    static constexpr std::string_view kClose = "{{/insights}}";

    std::string out = text;
    size_t open = out.find(kOpen);
    if (open != std::string::npos) {
        size_t close = out.find(kClose, open);
        if (close == std::string::npos)
            fail(Errc::config_error, "unterminated {{#insights}} section in prompt template");
        if (insights.empty()) {
            out.erase(open, close + kClose.size() - open);
        } else {
            out.erase(close, kClose.size());
            out.erase(open, kOpen.size());
        }
    }
    replace_all(out, "{{question}}", question);
    replace_all(out, "{{insights}}", insights);
    return out;
}

const PromptTemplate& default_insight_template() {
    static const PromptTemplate tmpl{
        "You are a reasoning assistant. Analyze the given problem and produce a structured "
        "[Thinking Insights] block with exactly these four components:\n"
        "1. Goal: <objective, constraints, and required output form>\n"
        "2. Planning: <high-level strategy; subproblem decomposition; edge cases>\n"
        "3. Retrieval: <relevant facts, formulas, or definitions; N/A if none>\n"
        "4. Action: <concrete steps and intermediate calculations>\n"
        "\n"
        "Constraints:\n"
        "- Keep each component concise.\n"
        "- Maintain notational consistency with the original problem.\n"
        "- Do not state the final answer; provide guidance only.\n"};
    return tmpl;
}

const PromptTemplate& default_answer_template() {
    static const PromptTemplate tmpl{
        "Solve the following problem.\n"
        "\n"
        "Problem:\n"
        "{{question}}\n"
        "{{#insights}}\n"
        "[Thinking Insights]\n"
        "{{insights}}\n"
        "{{/insights}}\n"
        "Reason step by step and put the final answer inside \\boxed{}.\n"};
    return tmpl;
}

long whitespace_token_count(std::string_view text) {
    long count = 0;
    bool in_token = false;
    for (char c : text) {
        bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

SlmInput build_slm_input(const Question& q, const InsightStream& stream, const EffortStage& stage,
                         const PromptTemplate& tmpl, const TokenCounter& counter) {
    std::string insights = stage.index == 0 ? std::string() : stream.stage_text(stage.index);
    SlmInput input;
    input.question_id = q.id;
    input.stage = stage;
    input.rendered_text = tmpl.render(q.text, insights);
    if (counter) {
        auto [n, exact] = counter(input.rendered_text);
        input.token_count = n;
        input.token_count_exact = exact;
    } else {
        input.token_count = whitespace_token_count(input.rendered_text);
        input.token_count_exact = false;
    }
    if (input.token_count < 1) fail(Errc::empty_input, "rendered SLM input has no tokens");
    return input;
}

} // namespace tandem::core
