#pragma once

#include <span>
#include <string>
#include <string_view>

#include "kanc/ad/tape.hpp"

namespace kanc::symbolic {

// A fixed univariate map that can replace a learned edge.
struct BasicFunction {
  ad::UnaryFunction unary;  // name, value, derivative
  std::string_view pattern;  // infix rendering, "{}" stands for the argument

  std::string_view name() const { return unary.name; }
  double operator()(double x) const { return unary.value(x); }
  double deriv(double x) const { return unary.deriv(x); }
  std::string render(const std::string& arg) const;
};

// x, x^2, x^3, 1/x, 1/x^2, exp, log, sin, cos, tan, tanh, atan, abs, sqrt.
// The order is the tie-break order used when ranking fits.
std::span<const BasicFunction> library();

// Throws ConfigError for unknown names.
const BasicFunction& find_function(std::string_view name);

}  // namespace kanc::symbolic
