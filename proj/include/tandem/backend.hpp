#pragma once

/**
 * Uniform interface to mentor/intern models: budgeted insight generation,
 * teacher-forced sequence scoring, and answer generation.
 *
 * Two implementations ship: an HTTP client for OpenAI-compatible servers
 * (chat completions for generation, legacy completions with echo+logprobs
 * for scoring) and a deterministic mock driven by a JSON fixture. Clients
 * are safe for concurrent requests; fixtures are read-only after load.
 */

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tandem/core.hpp"

namespace tandem::backend {

enum class Role { mentor, intern };

const char* role_name(Role r);
Role role_from_name(std::string_view name);

struct Decoding {
    double temperature = 0.0;
    double top_p = 1.0;
    double frequency_penalty = 0.0;
    long max_answer_tokens = 8192;
};

struct ModelSpec {
    std::string name;
    Role role = Role::intern;
    long long param_count = 0; // |θ|, in parameters
    std::string endpoint;      // http(s)://... or mock:<fixture-path>
    std::optional<double> price_per_1k_input;
    std::optional<double> price_per_1k_output;
    Decoding decoding;
    std::optional<bool> thinking_mode; // toggles the reasoning-mode request field when set
    int max_retries = 2;               // bounded transport retries (HTTP only)

    bool is_mock() const { return endpoint.rfind("mock:", 0) == 0; }
    void validate() const;
};

// Realized-token log-probability plus the top-K alternative distribution at
// one position. residual_mass is the probability outside the reported
// alternatives (0 when the backend covers the whole vocabulary).
struct TokenScore {
    std::string token_text;
    double realized_logprob = 0.0; // natural log, <= 0
    std::vector<std::pair<std::string, double>> top_alternatives;
    double residual_mass = 0.0;
};

enum class FinishReason { budget, stop_marker, length_limit };

const char* finish_reason_name(FinishReason r);
FinishReason finish_reason_from_name(std::string_view name);

struct Usage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct GenerationResult {
    std::string text;
    std::vector<std::string> tokens; // may be empty when the server reports only bulk text
    FinishReason finish_reason = FinishReason::stop_marker;
    Usage usage;
};

class Backend {
public:
    virtual ~Backend() = default;

    // Continue the mentor stream up to the target stage's cumulative budget.
    // Returns at most (cumulative_budget(target) - len(prior)) new tokens.
    virtual GenerationResult generate_insights(const ModelSpec& model, const core::Question& q,
                                               const core::InsightStream& prior,
                                               const core::EffortStage& target_stage,
                                               const core::PromptTemplate& tmpl) = 0;

    // Teacher-forced scoring of the input: one TokenScore per position that
    // has a defined predictive distribution (the first token is omitted).
    virtual std::vector<TokenScore> score_sequence(const ModelSpec& model, const core::SlmInput& input) = 0;

    virtual GenerationResult generate_answer(const ModelSpec& model, const core::SlmInput& input) = 0;

    // (count, exact) under this backend's tokenizer contract; the base
    // implementation is the documented whitespace fallback.
    virtual std::pair<long, bool> count_tokens(std::string_view text) const;

    core::TokenCounter token_counter() const;
};

// Dispatches on the endpoint scheme. top_k bounds the alternative
// distribution requested per scored position.
std::shared_ptr<Backend> make_backend(const ModelSpec& spec, int top_k);

} // namespace tandem::backend
