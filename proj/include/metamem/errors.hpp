#pragma once

#include <stdexcept>
#include <string>

namespace metamem {

// Configuration problems: missing provider slots, bad config keys/values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Transport-level provider failures (network, auth, malformed responses).
struct ProviderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Scripted-provider failures: transcript exhausted or fingerprint mismatch.
struct TranscriptError : ProviderError {
    using ProviderError::ProviderError;
};

// Malformed input data files (datasets, sessions, transcripts).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint load/validation failures (schema version, broken invariants).
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Prompt template problems (missing/unused bindings, unknown template key).
struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace metamem
