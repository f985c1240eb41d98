#include "tandem/cascade.hpp"

#include <algorithm>
#include <charconv>

namespace tandem::cascade {

using backend::Role;

Policy Policy::fixed(int stage) {
    if (stage < 0 || stage > 3) fail(Errc::usage_error, "fixed_stage wants a stage in 0..3");
    Policy p{PolicyKind::fixed_stage};
    p.stage = stage;
    return p;
}

Policy Policy::budget_forcing(long budget_tokens) {
    if (budget_tokens <= 0) fail(Errc::usage_error, "budget_forcing wants a positive token budget");
    Policy p{PolicyKind::budget_forcing};
    p.budget_tokens = budget_tokens;
    return p;
}

Policy Policy::parse(std::string_view text) {
    auto colon = text.find(':');
    std::string_view head = text.substr(0, colon);
    std::string_view arg = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);

    auto parse_int = [&](std::string_view s) -> long {
        long value = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc() || ptr != s.data() + s.size())
            fail(Errc::usage_error, "bad numeric policy argument '" + std::string(s) + "'");
        return value;
    };

    if (head == "tandem") return tandem();
    if (head == "one_shot_router") return router();
    if (head == "fixed_stage") return fixed(static_cast<int>(parse_int(arg)));
    if (head == "budget_forcing") return budget_forcing(parse_int(arg));
    if (head == "single") {
        if (arg == "intern") return single(Role::intern);
        if (arg == "mentor") return single(Role::mentor);
        fail(Errc::usage_error, "single wants 'intern' or 'mentor'");
    }
    fail(Errc::usage_error, "unknown policy '" + std::string(text) + "'");
}

std::string Policy::to_string() const {
    switch (kind) {
        case PolicyKind::tandem: return "tandem";
        case PolicyKind::one_shot_router: return "one_shot_router";
        case PolicyKind::fixed_stage: return "fixed_stage:" + std::to_string(stage);
        case PolicyKind::single_model: return std::string("single:") + backend::role_name(model);
        case PolicyKind::budget_forcing: return "budget_forcing:" + std::to_string(budget_tokens);
    }
    return "tandem";
}

const StageRecord* EpisodeResult::find_stage(int index) const {
    for (const auto& s : stages)
        if (s.stage.index == index) return &s;
    return nullptr;
}

const StageRaw* EpisodeRaw::find_stage(int index) const {
    for (const auto& s : stages)
        if (s.stage_index == index) return &s;
    return nullptr;
}

double Judge::tau(int stage) const {
    auto it = thresholds->tau.find(stage);
    if (it == thresholds->tau.end())
        fail(Errc::classifier_missing, "no threshold for stage " + std::to_string(stage));
    return it->second;
}

CascadeConfig default_cascade_config() {
    CascadeConfig cfg;
    cfg.ladder = core::StageLadder::from_budgets({100, 500, 1000});
    cfg.insight_template = core::default_insight_template();
    cfg.answer_template = core::default_answer_template();
    return cfg;
}

int fallback_select(const std::array<double, 4>& scores) {
    int best = 0;
    for (int t = 1; t < 4; ++t)
        if (scores[static_cast<size_t>(t)] > scores[static_cast<size_t>(best)]) best = t;
    return best;
}

double compute_cost(long long mentor_tokens, long long intern_tokens, long long theta_L, long long theta_S) {
    if (mentor_tokens < 0 || intern_tokens < 0 || theta_L < 0 || theta_S < 0)
        fail(Errc::usage_error, "compute_cost wants non-negative inputs");
    const double ll = static_cast<double>(mentor_tokens);
    const double ls = static_cast<double>(intern_tokens);
    return 2.0e-12 * (static_cast<double>(theta_L) * ll + static_cast<double>(theta_S) * (ll + ls));
}

double compute_dollar_cost(
    const std::map<std::string, backend::Usage>& usage,
    const std::map<std::string, std::pair<std::optional<double>, std::optional<double>>>& prices) {
    double total = 0.0;
    for (const auto& [model, u] : usage) {
        auto it = prices.find(model);
        const auto* price = it == prices.end() ? nullptr : &it->second;
        if (u.prompt_tokens > 0) {
            if (!price || !price->first.has_value())
                fail(Errc::missing_price, "no input price for model '" + model + "'");
            total += static_cast<double>(u.prompt_tokens) * (*price->first) / 1000.0;
        }
        if (u.completion_tokens > 0) {
            if (!price || !price->second.has_value())
                fail(Errc::missing_price, "no output price for model '" + model + "'");
            total += static_cast<double>(u.completion_tokens) * (*price->second) / 1000.0;
        }
    }
    return total;
}

namespace {

// One live episode. Stage work is lazy: nothing is generated, scored, or
// answered unless the policy path (or all-stage mode) asks for it.
class Episode {
public:
    Episode(const core::Question& q, const Policy& policy, const Models& models, const Judge& judge,
            const CascadeConfig& cfg, EpisodeRaw* raw)
        : q_(q), policy_(policy), models_(models), judge_(judge), cfg_(cfg), raw_(raw),
          stream_(q.id) {
        result_.question_id = q.id;
        result_.policy = policy;
    }

    EpisodeResult run() {
        switch (policy_.kind) {
            case PolicyKind::tandem: run_tandem(); break;
            case PolicyKind::fixed_stage: run_fixed(policy_.stage); break;
            case PolicyKind::one_shot_router: run_router(); break;
            case PolicyKind::single_model: run_single(policy_.model); break;
            case PolicyKind::budget_forcing: run_budget_forcing(policy_.budget_tokens); break;
        }
        finalize();
        return std::move(result_);
    }

private:
    StageRecord& record_for(int index) {
        auto it = records_.find(index);
        if (it == records_.end()) {
            StageRecord rec;
            rec.stage = cfg_.ladder.at(index);
            rec.mentor_tokens_cumulative = stream_.token_count();
            it = records_.emplace(index, std::move(rec)).first;
        }
        return it->second;
    }

    StageRaw& raw_for(int index) {
        auto it = raws_.find(index);
        if (it == raws_.end()) {
            StageRaw raw;
            raw.stage_index = index;
            it = raws_.emplace(index, std::move(raw)).first;
        }
        return it->second;
    }

    void add_usage(const std::string& model_name, const backend::Usage& u) {
        auto& acc = result_.usage[model_name];
        acc.prompt_tokens += u.prompt_tokens;
        acc.completion_tokens += u.completion_tokens;
    }

    // Extend the mentor stream through stage `index` (budget-bounded
    // continuation requests); no-op for already-covered stages.
    void ensure_stage(int index, const core::EffortStage* override_stage = nullptr) {
        for (int t = stream_.recorded_stages() + 1; t <= index; ++t) {
            const core::EffortStage& stage =
                (override_stage && t == index) ? *override_stage : cfg_.ladder.at(t);
            if (mentor_done_) {
                stream_ = core::append_insight_chunk(stream_, "", 0, stage);
            } else {
                auto res = models_.mentor_backend->generate_insights(models_.mentor, q_, stream_, stage,
                                                                     cfg_.insight_template);
                if (!res.tokens.empty()) {
                    stream_ = core::append_insights(stream_, res.tokens, stage);
                } else {
                    stream_ = core::append_insight_chunk(stream_, res.text, res.usage.completion_tokens, stage);
                    if (res.usage.completion_tokens > 0) result_.approx_token_counts = true;
                }
                if (res.finish_reason == backend::FinishReason::stop_marker) mentor_done_ = true;
                add_usage(models_.mentor.name, res.usage);
                auto& raw = raw_for(stage.index);
                raw.insight_delta_text = res.text;
                raw.insight_delta_tokens = res.usage.completion_tokens;
                raw.mentor_usage = res.usage;
            }
            record_for(stage.index).mentor_tokens_cumulative = stream_.token_count();
        }
    }

    core::SlmInput input_at(int index, const backend::Backend& backend) {
        const auto& stage = cfg_.ladder.at(index);
        auto input = core::build_slm_input(q_, stream_, stage, cfg_.answer_template, backend.token_counter());
        if (!input.token_count_exact) result_.approx_token_counts = true;
        return input;
    }

    // Teacher-forced scoring of x^t plus feature extraction; no classifier.
    const uncertainty::FeatureVector& collect_stage(int index) {
        ensure_stage(index);
        auto& rec = record_for(index);
        if (rec.features.has_value()) return *rec.features;

        auto input = input_at(index, *models_.intern_backend);
        auto scores = models_.intern_backend->score_sequence(models_.intern, input);
        if (scores.empty()) fail(Errc::empty_input, "no scorable positions for stage " + std::to_string(index));
        const long n = static_cast<long>(scores.size()) + 1; // first position has no distribution
        rec.features = uncertainty::extract_features(scores, n);

        backend::Usage score_usage{n, 0};
        add_usage(models_.intern.name, score_usage);

        auto& raw = raw_for(index);
        raw.token_scores = std::move(scores);
        raw.n = n;
        raw.score_usage = score_usage;
        return *rec.features;
    }

    // s^t under the sufficiency classifier.
    double score_stage(int index) {
        const auto& features = collect_stage(index);
        double s = classifier::forward(*judge_.model, features);
        record_for(index).score = s;
        return s;
    }

    void answer_stage(int index, const backend::ModelSpec& spec, backend::Backend& be) {
        ensure_stage(index);
        auto input = input_at(index, be);
        auto res = be.generate_answer(spec, input);
        add_usage(spec.name, res.usage);
        auto& rec = record_for(index);
        rec.answer = res.text;
        rec.intern_answer_tokens = res.usage.completion_tokens;
        rec.answer_finish = res.finish_reason;
        raw_for(index).answer_usage = res.usage;
    }

    void answer_with_intern(int index) { answer_stage(index, models_.intern, *models_.intern_backend); }

    void answer_with_mentor(int index) {
        auto spec = models_.mentor;
        spec.role = Role::intern; // the mentor acts as the answerer here
        answer_stage(index, spec, *models_.mentor_backend);
    }

    void require_judge() {
        if (!judge_.valid())
            fail(Errc::classifier_missing, "policy '" + policy_.to_string() + "' needs a trained classifier");
    }

    void run_tandem() {
        require_judge();
        std::array<double, 4> scores{};
        int selected = -1;
        for (int t = 0; t <= 3; ++t) {
            double s = score_stage(t);
            scores[static_cast<size_t>(t)] = s;
            const bool judged = t > 0 || cfg_.allow_stage0_exit;
            if (judged) {
                int y = classifier::decide(s, judge_.tau(t));
                record_for(t).decision = y;
                if (y == 1 && selected < 0) {
                    selected = t;
                    if (!cfg_.all_stage_answers) break;
                }
            }
        }
        if (selected < 0) {
            // No stage fired: fall back to the highest sufficiency score.
            // s^0..s^3 were all computed on this path.
            result_.fallback_used = true;
            selected = fallback_select(scores);
        }
        result_.selected_stage = selected;
        if (cfg_.all_stage_answers) {
            for (int t = 0; t <= 3; ++t) answer_with_intern(t);
        } else {
            answer_with_intern(selected);
        }
        set_collaboration_cost(selected);
    }

    void run_fixed(int stage) {
        if (cfg_.all_stage_answers) {
            for (int t = 0; t <= 3; ++t) {
                if (judge_.valid())
                    score_stage(t);
                else
                    collect_stage(t);
                answer_with_intern(t);
            }
        } else {
            ensure_stage(stage);
            answer_with_intern(stage);
        }
        result_.selected_stage = stage;
        set_collaboration_cost(stage);
    }

    void run_router() {
        require_judge();
        double s0 = score_stage(0);
        int handoff = classifier::decide(s0, cfg_.router_threshold);
        record_for(0).decision = handoff;
        const int selected = handoff == 1 ? 0 : 3;
        if (selected == 3) ensure_stage(3);
        answer_with_intern(selected);
        result_.selected_stage = selected;
        set_collaboration_cost(selected);
    }

    void run_single(Role role) {
        result_.selected_stage = 0;
        if (role == Role::intern) {
            answer_with_intern(0);
            const auto* rec = find_record(0);
            long generated = rec ? rec->intern_answer_tokens : 0;
            result_.cost.tflops = compute_cost(0, generated, 0, models_.intern.param_count);
            result_.cost.mentor_tokens = 0;
            result_.cost.intern_generated_tokens = generated;
        } else {
            answer_with_mentor(0);
            const auto* rec = find_record(0);
            long generated = rec ? rec->intern_answer_tokens : 0;
            result_.cost.tflops = compute_cost(0, generated, 0, models_.mentor.param_count);
            result_.cost.mentor_tokens = generated;
            result_.cost.intern_generated_tokens = 0;
        }
    }

    void run_budget_forcing(long budget) {
        // Truncate the mentor's own reasoning at `budget` tokens by walking
        // the standard ladder with clamped cumulative budgets, then let the
        // mentor answer from Q plus its truncated reasoning.
        int last = 0;
        for (int t = 1; t <= 3; ++t) {
            core::EffortStage stage = cfg_.ladder.at(t);
            bool final_stage = stage.cumulative_budget_tokens >= budget;
            if (final_stage) stage.cumulative_budget_tokens = budget;
            ensure_stage(t, &stage);
            last = t;
            if (final_stage || mentor_done_) break;
        }
        answer_with_mentor(last);
        result_.selected_stage = last;

        const auto* rec = find_record(last);
        long answer_tokens = rec ? rec->intern_answer_tokens : 0;
        long total = stream_.token_count() + answer_tokens;
        result_.cost.tflops = compute_cost(0, total, 0, models_.mentor.param_count);
        result_.cost.mentor_tokens = total;
        result_.cost.intern_generated_tokens = 0;
    }

    const StageRecord* find_record(int index) {
        auto it = records_.find(index);
        return it == records_.end() ? nullptr : &it->second;
    }

    // As-deployed collaboration bill: the mentor is charged for every token
    // it actually generated; the intern for its answer at the selected stage.
    void set_collaboration_cost(int selected) {
        long mentor_tokens =
            result_.fallback_used ? stream_.token_count() : record_for(selected).mentor_tokens_cumulative;
        long intern_tokens = record_for(selected).intern_answer_tokens;
        result_.cost.mentor_tokens = mentor_tokens;
        result_.cost.intern_generated_tokens = intern_tokens;
        result_.cost.tflops =
            compute_cost(mentor_tokens, intern_tokens, models_.mentor.param_count, models_.intern.param_count);
    }

    void finalize() {
        for (auto& [index, rec] : records_) result_.stages.push_back(std::move(rec));
        if (raw_) {
            for (auto& [index, raw] : raws_) raw_->stages.push_back(std::move(raw));
        }
        const auto* sel = result_.find_stage(result_.selected_stage);
        if (sel && sel->answer.has_value()) result_.final_answer = *sel->answer;

        // Dollars only when every used model carries the needed prices.
        std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> prices;
        prices[models_.mentor.name] = {models_.mentor.price_per_1k_input, models_.mentor.price_per_1k_output};
        prices[models_.intern.name] = {models_.intern.price_per_1k_input, models_.intern.price_per_1k_output};
        bool priced = true;
        for (const auto& [name, u] : result_.usage) {
            auto it = prices.find(name);
            if (it == prices.end() || (u.prompt_tokens > 0 && !it->second.first.has_value()) ||
                (u.completion_tokens > 0 && !it->second.second.has_value())) {
                priced = false;
                break;
            }
        }
        if (priced && !result_.usage.empty()) result_.cost.dollars = compute_dollar_cost(result_.usage, prices);
    }

    const core::Question& q_;
    Policy policy_;
    const Models& models_;
    Judge judge_;
    const CascadeConfig& cfg_;
    EpisodeRaw* raw_;

    core::InsightStream stream_;
    bool mentor_done_ = false;
    std::map<int, StageRecord> records_;
    std::map<int, StageRaw> raws_;
    EpisodeResult result_;
};

} // namespace

EpisodeResult run_episode(const core::Question& q, const Policy& policy, const Models& models,
                          const Judge& judge, const CascadeConfig& cfg, EpisodeRaw* raw) {
    Episode episode(q, policy, models, judge, cfg, raw);
    return episode.run();
}

} // namespace tandem::cascade
