#include "bsei/numfmt.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <system_error>

namespace bsei::numfmt {

namespace {

std::string finish(char* first, std::to_chars_result res) {
    if (res.ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(first, res.ptr);
}

}  // namespace

std::string sig(double v, int digits) {
    char buf[64];
    if (v == 0.0) v = 0.0;  // no "-0"
    return finish(buf, std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits));
}

std::string shortest(double v) {
    char buf[64];
    if (v == 0.0) v = 0.0;
    return finish(buf, std::to_chars(buf, buf + sizeof buf, v));
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    return v;
}

}  // namespace bsei::numfmt
