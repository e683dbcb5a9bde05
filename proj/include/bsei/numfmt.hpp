#pragma once

#include <string>
#include <string_view>

namespace bsei::numfmt {

/// `digits` significant digits, %g style.
std::string sig(double v, int digits);

/// Shortest text that reads back to the same double.
std::string shortest(double v);

/// Strict parse of a whole token; throws std::invalid_argument.
double parse_double(std::string_view text);

}  // namespace bsei::numfmt
