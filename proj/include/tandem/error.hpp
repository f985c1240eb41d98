#pragma once

#include <stdexcept>
#include <string>

namespace tandem {

// Every failure mode the library reports. The C API maps these onto
// coarser tandem_status codes; C++ callers catch tandem::Error directly.
enum class Errc {
    ok = 0,
    // core
    budget_exceeded,
    stage_out_of_order,
    missing_stage_boundary,
    // backend
    transport_error,
    capability_error,
    // uncertainty
    empty_input,
    invalid_distribution,
    // classifier
    dimension_mismatch,
    single_class_data,
    empty_data,
    empty_stage,
    // cascade
    classifier_missing,
    missing_price,
    // traces
    io_error,
    schema_mismatch,
    missing_stage_data,
    // harness
    parse_error,
    unknown_format,
    missing_grades,
    grader_unavailable,
    // config / cli
    config_error,
    usage_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace tandem
