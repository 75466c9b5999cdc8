#include "kanc/symbolic/functions.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::symbolic {

namespace {

double id_v(double x) { return x; }
double one(double) { return 1.0; }
double sq_v(double x) { return x * x; }
double sq_d(double x) { return 2.0 * x; }
double cube_v(double x) { return x * x * x; }
double cube_d(double x) { return 3.0 * x * x; }
double inv_v(double x) { return 1.0 / x; }
double inv_d(double x) { return -1.0 / (x * x); }
double inv2_v(double x) { return 1.0 / (x * x); }
double inv2_d(double x) { return -2.0 / (x * x * x); }
double exp_v(double x) { return std::exp(x); }
double log_v(double x) { return std::log(x); }
double log_d(double x) { return 1.0 / x; }
double sin_v(double x) { return std::sin(x); }
double cos_v(double x) { return std::cos(x); }
double neg_sin(double x) { return -std::sin(x); }
double tan_v(double x) { return std::tan(x); }
double tan_d(double x) {
  const double c = std::cos(x);
  return 1.0 / (c * c);
}
double tanh_v(double x) { return std::tanh(x); }
double tanh_d(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}
double atan_v(double x) { return std::atan(x); }
double atan_d(double x) { return 1.0 / (1.0 + x * x); }
double abs_v(double x) { return std::fabs(x); }
double abs_d(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
double sqrt_v(double x) { return std::sqrt(x); }
double sqrt_d(double x) { return 0.5 / std::sqrt(x); }

const std::array<BasicFunction, 14> kLibrary{{
    {{"x", id_v, one}, "{}"},
    {{"x^2", sq_v, sq_d}, "({})^2"},
    {{"x^3", cube_v, cube_d}, "({})^3"},
    {{"1/x", inv_v, inv_d}, "1/({})"},
    {{"1/x^2", inv2_v, inv2_d}, "1/({})^2"},
    {{"exp", exp_v, exp_v}, "exp({})"},
    {{"log", log_v, log_d}, "log({})"},
    {{"sin", sin_v, cos_v}, "sin({})"},
    {{"cos", cos_v, neg_sin}, "cos({})"},
    {{"tan", tan_v, tan_d}, "tan({})"},
    {{"tanh", tanh_v, tanh_d}, "tanh({})"},
    {{"atan", atan_v, atan_d}, "atan({})"},
    {{"abs", abs_v, abs_d}, "abs({})"},
    {{"sqrt", sqrt_v, sqrt_d}, "sqrt({})"},
}};

}  // namespace

std::string BasicFunction::render(const std::string& arg) const {
  return fmt::format(fmt::runtime(pattern), arg);
}

std::span<const BasicFunction> library() { return kLibrary; }

const BasicFunction& find_function(std::string_view name) {
  for (const auto& f : kLibrary) {
    if (f.name() == name) return f;
  }
  throw ConfigError(fmt::format("unknown basic function '{}'", name));
}

}  // namespace kanc::symbolic
