#pragma once

#include <stdexcept>
#include <string>

namespace moeprune {

// Base for every error the library raises on bad input data.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, long line)
        : Error(what), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ValueError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class IncompatibleError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace moeprune
