#pragma once

#include <stdexcept>
#include <string>

namespace invsysid {

/// Base class for every error thrown by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameter or specification (bad probing spec, bad options).
class param_error : public error {
public:
    using error::error;
};

/// Request that is valid in form but impossible in the problem domain
/// (deactivated region, insufficient excitation, undefined metric).
class domain_error : public error {
public:
    using error::error;
};

/// Dataset ingestion failure; carries the offending row when known.
class data_error : public error {
public:
    explicit data_error(const std::string& msg, long row = -1)
        : error(row >= 0 ? msg + " (row " + std::to_string(row) + ")" : msg), row_(row) {}
    long row() const noexcept { return row_; }

private:
    long row_ = -1;
};

/// Model-level failure: coverage hole, span mismatch, broken tiling.
class model_error : public error {
public:
    using error::error;
};

/// Operating point outside the region scheme; remembers the nearest region.
class classification_error : public domain_error {
public:
    classification_error(const std::string& msg, std::string nearest)
        : domain_error(msg + " (nearest region: " + nearest + ")"), nearest_(std::move(nearest)) {}
    const std::string& nearest_region() const noexcept { return nearest_; }

private:
    std::string nearest_;
};

}  // namespace invsysid
