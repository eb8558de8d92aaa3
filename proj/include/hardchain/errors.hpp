#pragma once

#include <stdexcept>
#include <string>

namespace hardchain {

struct UnsupportedOrder : std::invalid_argument {
  explicit UnsupportedOrder(const std::string& what) : std::invalid_argument(what) {}
};

struct DimensionMismatch : std::invalid_argument {
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

/// Parameter choices that violate a feasibility ceiling or dimension floor.
struct InfeasibleParameters : std::invalid_argument {
  explicit InfeasibleParameters(const std::string& what) : std::invalid_argument(what) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hardchain
