#pragma once

#include <stdexcept>
#include <string>

namespace propwatch {

/// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
    usage,    ///< bad arguments or configuration
    io,       ///< file or socket could not be read/written
    parse,    ///< input violates its documented shape
    format,   ///< binary/model file header or layout mismatch
    data,     ///< well-formed input with unusable content (NaN, single class, ...)
    runtime,  ///< anything else
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace propwatch
