#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace hspde {

/// Failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
    invalid_argument,
    numerical,
    hypothesis,
    verification,
    io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::hypothesis: return "hypothesis";
    case ErrorKind::verification: return "verification";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream out;
    out.precision(10);
    (out << ... << std::forward<Args>(args));
    return out.str();
}

} // namespace detail

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, Args&&... args) {
    throw Error(kind, detail::concat(std::forward<Args>(args)...));
}

template <typename... Args>
void require(bool condition, Args&&... args) {
    if (!condition) {
        fail(ErrorKind::invalid_argument, std::forward<Args>(args)...);
    }
}

} // namespace hspde
