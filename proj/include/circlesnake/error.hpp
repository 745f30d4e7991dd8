#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace csnake {

// Base of every error raised by the library. The kind tag names the
// contract that was violated so callers (and the CLI) can branch on it.
class Error : public std::runtime_error {
public:
    enum class Kind {
        CoordinateRange,
        Evaluation,
        Annotation,
        Domain,
        Shape,
        Geometry,
        Schema,
        Integrity,
        Sizing,
        Export,
        DegenerateInput,
        Aggregation,
        Generation,
        Training,
        Usage,
        Io,
    };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

const char* kind_name(Error::Kind kind) noexcept;

class TrainingError : public Error {
public:
    TrainingError(std::size_t step, const std::string& what)
        : Error(Kind::Training, "step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

[[noreturn]] inline void fail(Error::Kind kind, const std::string& what) { throw Error(kind, what); }

} // namespace csnake
