#pragma once

#include <stdexcept>
#include <string>

namespace lgvae {

// Shape or length mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Value outside the operation's domain (non-finite entry, empty list, bad range).
class InvalidInputError : public std::invalid_argument {
public:
    explicit InvalidInputError(const std::string& what) : std::invalid_argument(what) {}
};

// Operation called before its prerequisites were met (e.g. uncalibrated stats).
class InvalidStateError : public std::logic_error {
public:
    explicit InvalidStateError(const std::string& what) : std::logic_error(what) {}
};

// Training produced a non-finite loss.
class NumericalAbort : public std::runtime_error {
public:
    explicit NumericalAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lgvae
