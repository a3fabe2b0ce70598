#pragma once

#include <stdexcept>
#include <string>

namespace freetalk {

/// Error categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
    Parse,       // malformed input file
    Validation,  // structurally valid input violating an invariant
    Format,      // wrong magic / unsupported encoding
    Io,          // file system failure
    Config,      // bad configuration or arguments
    Numerical,   // solver failure, NaN loss
    Shape,       // tensor / array dimension mismatch
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind);

/// 0 success, 2 config error, 3 data error, 4 numerical failure.
int exit_code_for(ErrorKind kind);

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what)
{
    if (!cond) fail(kind, what);
}

} // namespace freetalk
