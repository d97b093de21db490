#pragma once

#include <stdexcept>
#include <string>

namespace magnifier {

enum class ErrorCode {
    malformed_domain,
    bare_suffix,
    ip_literal,
    file_unreadable,
    bad_pcap_magic,
    out_of_order,
    zero_effective_count,
    empty_feature_set,
    not_balanced,
    not_distilled,
    already_distilled,
    length_mismatch,
    empty_samples,
    non_background_truth,
    duplicate_labels,
    io_failure,
    schema_violation,
    unsupported_version,
    invalid_config,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace magnifier
