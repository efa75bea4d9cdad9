#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>

namespace levicool {

/// Exact positive rational, used for frame rates such as 875.26 fps = 43763/50.
struct Rational {
    std::int64_t num = 1;
    std::int64_t den = 1;

    static Rational make(std::int64_t n, std::int64_t d);
    /// Parses "221", "875.26" or "87526/100".
    static Rational parse(std::string_view text);

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;

    friend bool operator==(const Rational&, const Rational&) = default;
};

/// Smallest rate that is an integer multiple of both rates.
Rational lcm(const Rational& a, const Rational& b);

}  // namespace levicool
