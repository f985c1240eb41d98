#include "tandem/backend.hpp"

#include "tandem/mock_backend.hpp"

namespace tandem::backend {

const char* role_name(Role r) { return r == Role::mentor ? "mentor" : "intern"; }

Role role_from_name(std::string_view name) {
    if (name == "mentor") return Role::mentor;
    if (name == "intern") return Role::intern;
    fail(Errc::config_error, "unknown model role '" + std::string(name) + "'");
}

const char* finish_reason_name(FinishReason r) {
    switch (r) {
        case FinishReason::budget: return "budget";
        case FinishReason::stop_marker: return "stop_marker";
        case FinishReason::length_limit: return "length_limit";
    }
    return "stop_marker";
}

FinishReason finish_reason_from_name(std::string_view name) {
    if (name == "budget") return FinishReason::budget;
    if (name == "stop_marker") return FinishReason::stop_marker;
    if (name == "length_limit") return FinishReason::length_limit;
    fail(Errc::parse_error, "unknown finish reason '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
    if (name.empty()) fail(Errc::config_error, "model name is empty");
    if (param_count <= 0) fail(Errc::config_error, "model '" + name + "' needs param_count > 0");
    if (endpoint.empty()) fail(Errc::config_error, "model '" + name + "' has no endpoint");
    if (decoding.temperature < 0) fail(Errc::config_error, "temperature must be >= 0");
    if (decoding.top_p <= 0 || decoding.top_p > 1.0) fail(Errc::config_error, "top_p must be in (0,1]");
    if (decoding.max_answer_tokens <= 0) fail(Errc::config_error, "max_answer_tokens must be positive");
    if (max_retries < 0) fail(Errc::config_error, "max_retries must be >= 0");
}

std::pair<long, bool> Backend::count_tokens(std::string_view text) const {
    return {core::whitespace_token_count(text), false};
}

core::TokenCounter Backend::token_counter() const {
    return [this](std::string_view text) { return count_tokens(text); };
}

std::shared_ptr<Backend> make_http_backend(const ModelSpec& spec, int top_k); // backend_http.cpp

std::shared_ptr<Backend> make_backend(const ModelSpec& spec, int top_k) {
    spec.validate();
    if (spec.is_mock()) return std::make_shared<MockBackend>(spec.endpoint, top_k);
    return make_http_backend(spec, top_k);
}

} // namespace tandem::backend
