#pragma once

#include <stdexcept>
#include <string>

namespace nirgnn {

/// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorKind {
  dimension,
  domain,
  config,
  ingest,
  lookup,
  protocol,
  training,
  evaluation,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::ingest: return "ingestion error";
    case ErrorKind::lookup: return "lookup error";
    case ErrorKind::protocol: return "protocol error";
    case ErrorKind::training: return "training error";
    case ErrorKind::evaluation: return "evaluation error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::dimension, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct IngestError : Error {
  explicit IngestError(const std::string& w) : Error(ErrorKind::ingest, w) {}
};
struct LookupError : Error {
  explicit LookupError(const std::string& w) : Error(ErrorKind::lookup, w) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error(ErrorKind::protocol, w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(ErrorKind::training, w) {}
};
struct EvaluationError : Error {
  explicit EvaluationError(const std::string& w) : Error(ErrorKind::evaluation, w) {}
};

}  // namespace nirgnn
