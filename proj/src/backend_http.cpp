#include <algorithm>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "tandem/backend.hpp"

namespace tandem::backend {

using nlohmann::json;

namespace {

struct EndpointParts {
    std::string base;   // scheme://host:port
    std::string prefix; // optional path prefix, "" or "/something"
};

EndpointParts split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        fail(Errc::config_error, "endpoint '" + endpoint + "' is not a URL");
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

Usage parse_usage(const json& body) {
    Usage u;
    if (body.contains("usage")) {
        const auto& usage = body["usage"];
        u.prompt_tokens = usage.value("prompt_tokens", 0L);
        u.completion_tokens = usage.value("completion_tokens", 0L);
    }
    return u;
}

/**
 * OpenAI-compatible client. Generation goes through the chat-completions
 * schema; teacher-forced scoring uses the legacy completions schema with
 * echo=true and logprobs=K, which local inference servers widely implement.
 * Servers lacking prompt logprobs fail fast with capability_error instead
 * of silently degrading.
 */
class HttpBackend : public Backend {
public:
    HttpBackend(const ModelSpec& spec, int top_k) : parts_(split_endpoint(spec.endpoint)), top_k_(top_k) {}

    GenerationResult generate_insights(const ModelSpec& model, const core::Question& q,
                                       const core::InsightStream& prior, const core::EffortStage& target_stage,
                                       const core::PromptTemplate& tmpl) override {
        if (model.role != Role::mentor) fail(Errc::config_error, "generate_insights requires a mentor model");
        int expected = prior.recorded_stages() + 1;
        if (target_stage.index != expected)
            fail(Errc::stage_out_of_order, "prior stream covers stages < " + std::to_string(expected) +
                                               ", cannot target stage " + std::to_string(target_stage.index));

        const long remaining = target_stage.cumulative_budget_tokens - prior.token_count();
        if (remaining <= 0) return {"", {}, FinishReason::budget, {}};

        json messages = json::array();
        messages.push_back({{"role", "system"}, {"content", tmpl.text}});
        messages.push_back({{"role", "user"}, {"content", q.text}});

        json req = chat_request(model, messages, remaining);
        std::string prior_text = prior.text();
        if (!prior_text.empty()) {
            // One logical mentor stream: later stages are continuations of
            // the assistant message that holds the insight text so far.
            req["messages"].push_back({{"role", "assistant"}, {"content", prior_text}});
            req["continue_final_message"] = true;
            req["add_generation_prompt"] = false;
        }
        req["logprobs"] = true; // token texts, when the server reports them

        json body = post_json(model, "/v1/chat/completions", req);
        GenerationResult result = parse_chat_response(body);
        result.finish_reason =
            result.finish_reason == FinishReason::length_limit ? FinishReason::budget : result.finish_reason;
        if (result.usage.completion_tokens > remaining)
            fail(Errc::capability_error, "server returned " + std::to_string(result.usage.completion_tokens) +
                                             " tokens against a limit of " + std::to_string(remaining));
        return result;
    }

    std::vector<TokenScore> score_sequence(const ModelSpec& model, const core::SlmInput& input) override {
        if (model.role != Role::intern) fail(Errc::config_error, "score_sequence requires the intern model");

        json req = {{"model", model.name}, {"prompt", input.rendered_text}, {"max_tokens", 0},
                    {"echo", true},        {"logprobs", top_k_}};
        json body = post_json(model, "/v1/completions", req);

        const json& choice = first_choice(body);
        if (!choice.contains("logprobs") || choice["logprobs"].is_null())
            fail(Errc::capability_error,
                 "backend did not return prompt logprobs; scoring needs echo+logprobs support");
        const json& lp = choice["logprobs"];
        if (!lp.contains("tokens") || !lp.contains("token_logprobs"))
            fail(Errc::capability_error, "logprobs response lacks tokens/token_logprobs");

        const auto& tokens = lp["tokens"];
        const auto& logprobs = lp["token_logprobs"];
        const json* tops = lp.contains("top_logprobs") ? &lp["top_logprobs"] : nullptr;

        std::vector<TokenScore> out;
        for (size_t i = 0; i < tokens.size() && i < logprobs.size(); ++i) {
            if (logprobs[i].is_null()) continue; // first token: no predictive distribution
            TokenScore ts;
            ts.token_text = tokens[i].get<std::string>();
            // Clamp float noise from the wire; logprobs are <= 0 by contract.
            ts.realized_logprob = std::min(0.0, logprobs[i].get<double>());
            double covered = 0.0;
            if (tops && i < tops->size() && !(*tops)[i].is_null()) {
                for (const auto& [tok, val] : (*tops)[i].items()) {
                    double alt = std::min(0.0, val.get<double>());
                    ts.top_alternatives.emplace_back(tok, alt);
                    covered += std::exp(alt);
                }
            }
            ts.residual_mass = std::max(0.0, 1.0 - covered);
            out.push_back(std::move(ts));
        }
        return out;
    }

    GenerationResult generate_answer(const ModelSpec& model, const core::SlmInput& input) override {
        json messages = json::array();
        messages.push_back({{"role", "user"}, {"content", input.rendered_text}});
        json req = chat_request(model, messages, model.decoding.max_answer_tokens);
        json body = post_json(model, "/v1/chat/completions", req);
        return parse_chat_response(body);
    }

private:
    json chat_request(const ModelSpec& model, json messages, long max_tokens) const {
        json req = {{"model", model.name},
                    {"messages", std::move(messages)},
                    {"max_tokens", max_tokens},
                    {"temperature", model.decoding.temperature},
                    {"top_p", model.decoding.top_p},
                    {"frequency_penalty", model.decoding.frequency_penalty}};
        if (model.thinking_mode.has_value())
            req["chat_template_kwargs"] = {{"enable_thinking", *model.thinking_mode}};
        return req;
    }

    static const json& first_choice(const json& body) {
        if (!body.contains("choices") || body["choices"].empty())
            fail(Errc::transport_error, "response carries no choices");
        return body["choices"][0];
    }

    static GenerationResult parse_chat_response(const json& body) {
        const json& choice = first_choice(body);
        GenerationResult result;
        if (choice.contains("message") && choice["message"].contains("content") &&
            !choice["message"]["content"].is_null())
            result.text = choice["message"]["content"].get<std::string>();
        std::string reason = choice.value("finish_reason", "stop");
        result.finish_reason = reason == "length" ? FinishReason::length_limit : FinishReason::stop_marker;
        result.usage = parse_usage(body);
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content")) {
            for (const auto& entry : choice["logprobs"]["content"])
                result.tokens.push_back(entry.value("token", ""));
        }
        if (result.tokens.empty() && result.usage.completion_tokens == 0 && !result.text.empty())
            result.usage.completion_tokens = core::whitespace_token_count(result.text);
        return result;
    }

    json post_json(const ModelSpec& model, const std::string& path, const json& req) {
        const std::string payload = req.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= model.max_retries; ++attempt) {
            httplib::Client client(parts_.base);
            client.set_read_timeout(300, 0);
            client.set_connection_timeout(10, 0);
            auto res = client.Post(parts_.prefix + path, payload, "application/json");
            if (!res) {
                last_error = "connection to " + parts_.base + " failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "server error " + std::to_string(res->status) + " from " + path;
                continue;
            }
            if (res->status != 200)
                fail(Errc::transport_error,
                     "HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                fail(Errc::transport_error, std::string("malformed JSON response: ") + e.what());
            }
        }
        fail(Errc::transport_error, last_error);
    }

    EndpointParts parts_;
    int top_k_;
};

} // namespace

std::shared_ptr<Backend> make_http_backend(const ModelSpec& spec, int top_k) {
    return std::make_shared<HttpBackend>(spec, top_k);
}

} // namespace tandem::backend
