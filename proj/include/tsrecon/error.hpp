#pragma once

#include <stdexcept>
#include <string>

namespace tsrecon {

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsrecon
