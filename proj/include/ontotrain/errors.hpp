#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ontotrain {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Character sequence matching no production of the tokenizer grammar.
class TokenizeError : public Error {
public:
    TokenizeError(const std::string& what, std::size_t offset, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what + " (offset " +
                                std::to_string(offset) + ")"
                          : what + " (offset " + std::to_string(offset) + ")"),
          offset_(offset),
          line_(line) {}

    std::size_t offset() const { return offset_; }
    long line() const { return line_; }

private:
    std::size_t offset_;
    long line_;
};

// Token sequence does not fit the configured maximum length.
class SequenceTooLong : public Error {
public:
    SequenceTooLong(std::size_t length, int max_len)
        : Error("sequence of " + std::to_string(length) + " tokens exceeds max_len " +
                std::to_string(max_len) + " (limit is max_len - 1 real tokens)"),
          length_(length),
          max_len_(max_len) {}

    std::size_t length() const { return length_; }
    int max_len() const { return max_len_; }

private:
    std::size_t length_;
    int max_len_;
};

// Malformed input file (OBO stanza, CSV row, checkpoint manifest, ...).
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    long line() const { return line_; }

private:
    long line_;
};

// The is-a relation contains a cycle; the message lists one offending cycle.
class CycleError : public Error {
public:
    explicit CycleError(const std::string& cycle)
        : Error("is-a cycle detected: " + cycle), cycle_(cycle) {}

    const std::string& cycle() const { return cycle_; }

private:
    std::string cycle_;
};

// Ontology identifier not present in the graph.
class UnknownClass : public Error {
public:
    explicit UnknownClass(const std::string& id) : Error("unknown ontology class: " + id) {}
};

// Required CSV column absent.
class MissingColumn : public Error {
public:
    explicit MissingColumn(const std::string& name)
        : Error("missing required column: " + name), name_(name) {}

    const std::string& name() const { return name_; }

private:
    std::string name_;
};

// A requested split would leave some part empty.
class DegenerateSplit : public Error {
public:
    using Error::Error;
};

// Configuration violates a type invariant; the message names the constraint.
class InvalidConfig : public Error {
public:
    using Error::Error;
};

// Tensor or argument shapes disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Checkpoint geometry incompatible with the requested configuration or data.
class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// Token id outside the configured vocabulary range.
class VocabOverflow : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

class NonFiniteGradient : public Error {
public:
    using Error::Error;
};

// Attention row too short to carry a normalized entropy (fewer than 2 keys).
class DegenerateSequence : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ontotrain
