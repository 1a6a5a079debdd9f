#pragma once

#include <stdexcept>
#include <string>

namespace umtn {

/// Broad failure classes; each maps onto one CLI exit code.
enum class ErrorCategory {
    Config = 2,
    Data = 3,
    Numerical = 4,
};

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string kind, const std::string& what)
        : std::runtime_error(what), category_(category), kind_(std::move(kind)) {}

    ErrorCategory category() const noexcept { return category_; }
    /// Short machine-readable tag, e.g. "argument" or "checksum".
    const std::string& kind() const noexcept { return kind_; }

private:
    ErrorCategory category_;
    std::string kind_;
};

#define UMTN_DEFINE_ERROR(Name, category, tag)                                   \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& what) : Error(category, tag, what) {}   \
    }

UMTN_DEFINE_ERROR(ArgumentError, ErrorCategory::Config, "argument");
UMTN_DEFINE_ERROR(ConfigError, ErrorCategory::Config, "config");
UMTN_DEFINE_ERROR(StateError, ErrorCategory::Config, "state");
UMTN_DEFINE_ERROR(ValidationError, ErrorCategory::Data, "validation");
UMTN_DEFINE_ERROR(DataError, ErrorCategory::Data, "data");
UMTN_DEFINE_ERROR(DomainError, ErrorCategory::Numerical, "domain");
UMTN_DEFINE_ERROR(DivergenceError, ErrorCategory::Numerical, "divergence");
UMTN_DEFINE_ERROR(EvaluationError, ErrorCategory::Numerical, "evaluation");
UMTN_DEFINE_ERROR(InternalError, ErrorCategory::Numerical, "internal");

#undef UMTN_DEFINE_ERROR

/// Raised when a kernel matrix is too ill-conditioned to factor reliably.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double condition)
        : Error(ErrorCategory::Numerical, "conditioning", what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Raised by dataset/checkpoint loaders; `kind()` distinguishes checksum,
/// truncation and version failures.
class LoadError : public Error {
public:
    LoadError(std::string kind, const std::string& what)
        : Error(ErrorCategory::Data, std::move(kind), what) {}
};

}  // namespace umtn
