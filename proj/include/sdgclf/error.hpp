#pragma once
// Exception hierarchy shared by every sdgclf module. Each category maps to a
// distinct CLI exit code (see cli.hpp).

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdgclf {

enum class ErrorKind {
    Schema,        // missing column, malformed file structure
    Row,           // a specific input row is unusable
    LabelRange,    // SDG index outside 1..17
    DefinitionSet, // goal definitions incomplete or duplicated
    Size,          // not enough records for a requested split
    EmptyInput,    // text tokenizes to nothing / nothing to pool
    Shape,         // dimension mismatch between tensors
    Parameter,     // invalid hyperparameter (temperature <= 0, ...)
    Label,         // invalid or empty label vector
    Batch,         // contrastive batch too small
    Template,      // prompt template precondition
    CacheMiss,     // fixture store has no entry for a prompt hash
    Provider,      // live transport failure after retries
    Numeric,       // non-finite loss or parameter
    Checkpoint,    // checkpoint missing, corrupt or mismatched
    Config,        // invalid or conflicting configuration
    Io,            // file could not be read or written
    DegenerateFit, // budget regression has nothing to fit
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Row: return "row error";
    case ErrorKind::LabelRange: return "label-range error";
    case ErrorKind::DefinitionSet: return "definition-set error";
    case ErrorKind::Size: return "size error";
    case ErrorKind::EmptyInput: return "empty-input error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Label: return "label error";
    case ErrorKind::Batch: return "batch error";
    case ErrorKind::Template: return "template error";
    case ErrorKind::CacheMiss: return "cache-miss error";
    case ErrorKind::Provider: return "provider error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Checkpoint: return "checkpoint error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::DegenerateFit: return "degenerate-fit error";
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

// Row-level ingest failure; carries the 1-based data row index.
class RowError : public Error {
public:
    RowError(std::size_t row, const std::string& what)
        : Error(ErrorKind::Row, "row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class LabelRangeError : public Error {
public:
    explicit LabelRangeError(std::string token)
        : Error(ErrorKind::LabelRange, "goal index '" + token + "' is outside 1..17"),
          token_(std::move(token)) {}

    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

class CacheMissError : public Error {
public:
    explicit CacheMissError(std::string hash, const std::string& context = {})
        : Error(ErrorKind::CacheMiss,
                "no fixture for prompt hash " + hash + (context.empty() ? "" : " (" + context + ")")),
          hash_(std::move(hash)) {}

    const std::string& hash() const noexcept { return hash_; }

private:
    std::string hash_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

} // namespace sdgclf
