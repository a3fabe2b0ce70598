#include <freetalk/error.hpp>

namespace freetalk {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Numerical: return "numerical error";
    case ErrorKind::Shape: return "shape error";
    }
    return "error";
}

int exit_code_for(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Numerical: return 4;
    default: return 3;
    }
}

void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

} // namespace freetalk
