#pragma once

#include <stdexcept>
#include <string>

namespace hudsim {

/// Malformed input text. `line` is 1-based; 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, int line, std::string field, const std::string& what)
        : std::runtime_error(format(source, line, field, what)), source_(std::move(source)), line_(line),
          field_(std::move(field)) {}

    const std::string& source() const { return source_; }
    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    static std::string format(const std::string& source, int line, const std::string& field, const std::string& what) {
        std::string msg = source.empty() ? std::string("<input>") : source;
        if (line > 0) msg += ":" + std::to_string(line);
        if (!field.empty()) msg += ": field '" + field + "'";
        return msg + ": " + what;
    }

    std::string source_;
    int line_;
    std::string field_;
};

/// Well-formed input that violates a semantic constraint.
class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
    using std::domain_error::domain_error;
};

/// Data for which a statistic or normalization is undefined (zero variance, singular design, ...).
class DegenerateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ego vehicle drifted too far from its route.
class RouteLostError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Event too close to the recording boundaries for a full analysis window.
class WindowError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// ADC auto-calibration could not bring the baseline into range.
class CalibrationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hudsim
