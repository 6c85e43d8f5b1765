#pragma once

#include <stdexcept>
#include <string>

namespace bvtrack {

/// Bad input: violated preconditions, malformed files, inconsistent dimensions.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Non-finite values or a numerical routine that failed to reach its target.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace detail
} // namespace bvtrack
