#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qasa {

// Shape/size mismatch between operands.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (non-scalar loss, unresolved
// parameter slot, too-short series, ...).
struct ContractViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent user-supplied configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wire/index out of range.
struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gate kind not handled by the requested gradient method.
struct UnsupportedGateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace qasa
