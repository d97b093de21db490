#include "magnifier/error.hpp"

namespace magnifier {

const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::malformed_domain: return "MalformedDomain";
    case ErrorCode::bare_suffix: return "BareSuffix";
    case ErrorCode::ip_literal: return "IpLiteral";
    case ErrorCode::file_unreadable: return "FileUnreadable";
    case ErrorCode::bad_pcap_magic: return "BadPcapMagic";
    case ErrorCode::out_of_order: return "OutOfOrderBeyondSlack";
    case ErrorCode::zero_effective_count: return "ZeroEffectiveCount";
    case ErrorCode::empty_feature_set: return "EmptyFeatureSet";
    case ErrorCode::not_balanced: return "NotBalanced";
    case ErrorCode::not_distilled: return "NotDistilled";
    case ErrorCode::already_distilled: return "AlreadyDistilled";
    case ErrorCode::length_mismatch: return "LengthMismatch";
    case ErrorCode::empty_samples: return "EmptySamples";
    case ErrorCode::non_background_truth: return "NonBackgroundTruth";
    case ErrorCode::duplicate_labels: return "DuplicateLabelsInMerge";
    case ErrorCode::io_failure: return "IoFailure";
    case ErrorCode::schema_violation: return "SchemaViolation";
    case ErrorCode::unsupported_version: return "UnsupportedVersion";
    case ErrorCode::invalid_config: return "InvalidConfig";
    }
    return "Error";
}

} // namespace magnifier
