#pragma once

#include <stdexcept>
#include <string>

namespace buscbm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, configs or arguments. The CLI maps these to exit 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// A statistic is undefined on the given population (single class, zero
// chance-corrected denominator, no ground truth). The CLI maps these to exit 3.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace buscbm
