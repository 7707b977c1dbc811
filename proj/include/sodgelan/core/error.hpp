#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sodgelan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Degenerate or out-of-domain input values (empty maps, NaN thresholds, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Tensor/spec dimensions that do not line up.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// A block or model spec that cannot be built.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <class... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace detail

#define SODGELAN_REQUIRE(cond, ExcType, ...)                          \
  do {                                                                \
    if (!(cond)) throw ExcType(::sodgelan::detail::concat(__VA_ARGS__)); \
  } while (0)

}  // namespace sodgelan
