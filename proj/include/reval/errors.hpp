#pragma once

#include <stdexcept>
#include <string>

namespace reval {

// Bad experiment configuration (unknown key, out-of-range value). CLI exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data (bad line, format violation). Carries a line number when known.
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
    data_error(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    std::size_t line_number = 0;
};

// A pipeline stage failed. CLI exit code 1.
struct stage_error : std::runtime_error {
    explicit stage_error(const std::string& stage, const std::string& msg)
        : std::runtime_error("stage '" + stage + "': " + msg), stage_name(stage) {}
    std::string stage_name;
};

// Statistical test input that admits no answer (n too small, zero variance).
struct degenerate_sample_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model training failed (e.g. factors diverged to non-finite values).
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace reval
