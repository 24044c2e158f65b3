#pragma once
//! \file errors.hpp

#include <stdexcept>
#include <string>

namespace critdiff {

//! Non-finite or non-convergent numerics; maps to CLI exit code 2.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

//! Invalid parameters or configuration; maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
  public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace critdiff
