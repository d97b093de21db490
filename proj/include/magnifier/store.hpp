#pragma once

#include <string>

#include "magnifier/distill.hpp"

namespace magnifier {

inline constexpr int kFingerprintFormatVersion = 1;

// Versioned fingerprint document. Output is deterministic: classes ordered
// by label, trees by root, nodes by name, numbers printed exactly enough to
// round-trip doubles.
void save_fingerprints(const FingerprintSet& set, const std::string& path);
std::string fingerprints_to_string(const FingerprintSet& set);

// Reconstructs the set and re-validates forest invariants; corrupt structure
// is rejected with Error(schema_violation) / Error(unsupported_version).
FingerprintSet load_fingerprints(const std::string& path);
FingerprintSet fingerprints_from_string(const std::string& text);

} // namespace magnifier
