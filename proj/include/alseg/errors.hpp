#pragma once

#include <stdexcept>
#include <string>

namespace alseg {

// Every error raised by the engine derives from Error so callers (the CLI in
// particular) can map the whole family onto one exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& what) : Error("invalid config: " + what) {}
};

class InvalidSelection : public Error {
public:
    explicit InvalidSelection(const std::string& what) : Error("invalid selection: " + what) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid argument: " + what) {}
};

class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& what) : Error("missing capability: " + what) {}
};

class MissingLabel : public Error {
public:
    explicit MissingLabel(const std::string& what) : Error("missing label: " + what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

} // namespace alseg
