#pragma once

#include <stdexcept>
#include <string>

namespace phenorag {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    // line is 1-based; 0 when not tied to a specific line.
    ParseError(const std::string& msg, std::size_t line = 0)
        : Error(line ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    std::size_t line_number = 0;
};

struct SchemaError : Error {
    SchemaError(const std::string& msg, std::size_t record = 0)
        : Error(record ? msg + " (record " + std::to_string(record) + ")" : msg),
          record_index(record) {}
    std::size_t record_index = 0;
};

struct EmptyInput : Error {
    using Error::Error;
};

struct EmptyCorpus : Error {
    using Error::Error;
};

struct EmptyIndex : Error {
    using Error::Error;
};

struct EmptyCandidates : Error {
    using Error::Error;
};

struct EmptyRecords : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct ProviderUnavailable : Error {
    using Error::Error;
};

struct AuthFailure : Error {
    using Error::Error;
};

struct BudgetExceeded : Error {
    using Error::Error;
};

struct ParseFailure : Error {
    // Raised when a model response yields zero recoverable prediction items.
    ParseFailure(const std::string& msg, std::string payload = {})
        : Error(msg), preserved_text(std::move(payload)) {}
    std::string preserved_text;
};

struct ScriptParseError : Error {
    using Error::Error;
};

struct UnscriptedPrompt : Error {
    using Error::Error;
};

struct ResponseTooLong : Error {
    using Error::Error;
};

}  // namespace phenorag
