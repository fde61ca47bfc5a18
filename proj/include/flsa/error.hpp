#pragma once

#include <stdexcept>
#include <string>

namespace flsa {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration or arguments. The CLI maps this to exit 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input data (corpus lines, rule files, model JSON).
class ParseError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

// Network / backend failure after retries were exhausted.
class TransportError : public Error {
public:
    using Error::Error;
};

// Gateway call budget exhausted.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

// A numerical quantity that must be positive came out as zero
// (e.g. a posterior denominator or a log argument).
class DegenerateError : public Error {
public:
    using Error::Error;
};

// The model's reply could not be interpreted, even after a retry.
class ResponseError : public Error {
public:
    ResponseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw_response() const { return raw_; }

private:
    std::string raw_;
};

}  // namespace flsa
