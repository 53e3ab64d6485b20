#pragma once

#include <stdexcept>
#include <string>

namespace crisk {

// Bad user input: malformed files, out-of-domain arguments, insufficient data.
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: factorisations or solvers that cannot proceed.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crisk
