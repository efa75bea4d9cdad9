#include "levicool/rational.hpp"

#include <charconv>
#include <cmath>

#include "levicool/errors.hpp"

namespace levicool {

Rational Rational::make(std::int64_t n, std::int64_t d) {
    if (n <= 0 || d <= 0) throw ConfigError("rate must be a positive rational");
    const auto g = std::gcd(n, d);
    return {n / g, d / g};
}

namespace {

std::int64_t parse_int(std::string_view digits, std::string_view whole) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{} || ptr != digits.data() + digits.size())
        throw ConfigError("not a rational number: '" + std::string(whole) + "'");
    return v;
}

}  // namespace

Rational Rational::parse(std::string_view text) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text.empty()) throw ConfigError("empty rational");
    if (auto slash = text.find('/'); slash != std::string_view::npos)
        return make(parse_int(text.substr(0, slash), text), parse_int(text.substr(slash + 1), text));
    if (auto dot = text.find('.'); dot != std::string_view::npos) {
        const auto frac = text.substr(dot + 1);
        if (frac.size() > 12) throw ConfigError("too many decimals in '" + std::string(text) + "'");
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const std::int64_t ip = dot == 0 ? 0 : parse_int(text.substr(0, dot), text);
        const std::int64_t fp = frac.empty() ? 0 : parse_int(frac, text);
        return make(ip * den + fp, den);
    }
    return make(parse_int(text, text), 1);
}

std::string Rational::str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

Rational lcm(const Rational& a, const Rational& b) {
    return Rational::make(std::lcm(a.num, b.num), std::gcd(a.den, b.den));
}

}  // namespace levicool
