#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cglab {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

enum class Verdict { kHarmful, kSafe, kInvalid };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

// Error taxonomy. Every failure the library reports is one of these.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : LoadError {
  using LoadError::LoadError;
};
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cglab
