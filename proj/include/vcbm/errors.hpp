#pragma once

#include <stdexcept>
#include <string>

namespace vcbm {

// Error taxonomy mapped to CLI exit codes: usage errors are raised by the
// argument parser itself (exit 2); data_error covers malformed inputs and
// IO problems (exit 3); numeric_error covers domain violations and
// non-finite values surfacing mid-computation (exit 4).

class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class shape_error : public error {
 public:
  explicit shape_error(const std::string& msg) : error(msg) {}
};

class data_error : public error {
 public:
  explicit data_error(const std::string& msg) : error(msg) {}
};

class numeric_error : public error {
 public:
  explicit numeric_error(const std::string& msg) : error(msg) {}
};

}  // namespace vcbm
