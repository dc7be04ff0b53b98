#pragma once

#include <stdexcept>
#include <string>

namespace verigrag {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed Verilog input. Carries a 1-based source position.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& message, int line, int column)
        : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

/// Valid Verilog that falls outside the supported subset. Corpus ingestion
/// skips these files instead of failing.
class UnsupportedConstruct : public Error {
public:
    UnsupportedConstruct(std::string construct, int line, int column)
        : Error("unsupported construct '" + construct + "' at " + std::to_string(line) + ":" +
                std::to_string(column)),
          construct_(std::move(construct)), line_(line), column_(column) {}

    const std::string& construct() const noexcept { return construct_; }
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    std::string construct_;
    int line_;
    int column_;
};

class ElaborationError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class EmptyGraphError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DegenerateInput : public Error { using Error::Error; };
class EmptyQueryError : public Error { using Error::Error; };
class DuplicateIdError : public Error { using Error::Error; };
class EmptyCodeError : public Error { using Error::Error; };
class DegenerateBatch : public Error { using Error::Error; };
class PipelineConfigError : public Error { using Error::Error; };
class NoTasksError : public Error { using Error::Error; };
/// The checker command could not be run at all (environment problem, not a failed sample).
class CheckerUnavailable : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace verigrag
