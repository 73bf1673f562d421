#pragma once

#include <stdexcept>
#include <string>

namespace pcotta {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. The CLI maps config/parse errors to exit code 2 and
// numeric/runtime errors to exit code 3.
struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct size_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pcotta
