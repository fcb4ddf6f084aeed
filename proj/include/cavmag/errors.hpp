#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cavmag {

// Base for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Input outside the physical domain of an operation (non-positive field, wavelength, ...).
class DomainError : public Error
{
public:
    using Error::Error;
};

// Evaluation hit a genuine singularity (undamped pole, critical-coupling divergence).
class SingularityError : public Error
{
public:
    using Error::Error;
};

// A single-resonance fit was asked to handle a spectrum with several dips.
class AmbiguousLineshapeError : public Error
{
public:
    using Error::Error;
};

// The data cannot constrain the requested parameters.
class IdentifiabilityError : public Error
{
public:
    using Error::Error;
};

// Sweep request outside the tabulated range.
class RangeError : public Error
{
public:
    using Error::Error;
};

class ParseError : public Error
{
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Collects every violation found while validating a value, rather than stopping at the first.
class ValidationError : public Error
{
public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations))
    {
    }

    [[nodiscard]] const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& items)
    {
        std::string out;
        for (const auto& item : items) {
            if (!out.empty()) {
                out += "; ";
            }
            out += item;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

} // namespace cavmag
