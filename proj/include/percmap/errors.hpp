#pragma once

#include <stdexcept>
#include <string>

namespace percmap {

// Exception hierarchy. The CLI maps these onto process exit codes
// (contract 2, I/O 3, numerical 4).

class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

#define PERCMAP_REQUIRE(cond, msg)                                   \
  do {                                                               \
    if (!(cond)) throw ::percmap::ContractError(std::string(msg));   \
  } while (0)

}  // namespace percmap
