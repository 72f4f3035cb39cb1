#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace bcid {

// Base of all library errors. code() is the stable machine-readable name
// emitted by the CLI on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& w) : Error("dimension_mismatch", w) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& w) : Error("shape_mismatch", w) {}
};

struct EmptyBatch : Error {
    explicit EmptyBatch(const std::string& w) : Error("empty_batch", w) {}
};

struct EmptyDataset : Error {
    explicit EmptyDataset(const std::string& w) : Error("empty_dataset", w) {}
};

struct EmptyInput : Error {
    explicit EmptyInput(const std::string& w) : Error("empty_input", w) {}
};

struct EmptyMatrix : Error {
    explicit EmptyMatrix(const std::string& w) : Error("empty_matrix", w) {}
};

struct UnknownCategory : Error {
    explicit UnknownCategory(const std::string& w) : Error("unknown_category", w) {}
};

struct CurrentNotInFrame : Error {
    explicit CurrentNotInFrame(const std::string& w) : Error("current_not_in_frame", w) {}
};

struct ConflictingRules : Error {
    explicit ConflictingRules(const std::string& w) : Error("conflicting_rules", w) {}
};

struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& w) : Error("invalid_config", w) {}
};

struct TooLargeForEnumeration : Error {
    explicit TooLargeForEnumeration(const std::string& w) : Error("too_large_for_enumeration", w) {}
};

struct StragglerTimeout : Error {
    explicit StragglerTimeout(const std::string& w) : Error("straggler_timeout", w) {}
};

struct EncodingMismatch : Error {
    explicit EncodingMismatch(const std::string& w) : Error("encoding_mismatch", w) {}
};

struct UnsortedInput : Error {
    explicit UnsortedInput(const std::string& w) : Error("unsorted_input", w) {}
};

// Parse failures carry the offending line so the CLI can name it.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : Error("parse_error", source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)), line_(line) {}

    const std::string& source() const { return source_; }
    std::size_t line() const { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

} // namespace bcid
