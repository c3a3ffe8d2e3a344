#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flowsym {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// Exact integer power of a rational. Throws on 0^negative.
inline Rational rat_pow(const Rational& base, std::int64_t k) {
    if (k == 0) return Rational(1);
    if (base.is_zero()) {
        if (k < 0) throw std::domain_error("rat_pow: zero raised to negative power");
        return Rational(0);
    }
    const unsigned long long mag = k < 0 ? static_cast<unsigned long long>(-(k + 1)) + 1ULL
                                         : static_cast<unsigned long long>(k);
    BigInt n = pow(numerator(base), static_cast<unsigned>(mag));
    BigInt d = pow(denominator(base), static_cast<unsigned>(mag));
    Rational r;
    if (k < 0) {
        if (n < 0) { n = -n; d = -d; }
        r = Rational(d) / Rational(n);
    } else {
        r = Rational(n) / Rational(d);
    }
    return r;
}

inline std::string rat_str(const Rational& r) { return r.str(); }

inline double rat_double(const Rational& r) { return r.convert_to<double>(); }

inline bool rat_is_int(const Rational& r) { return denominator(r) == 1; }

/// Integer value of an integral rational; throws otherwise.
inline std::int64_t rat_to_int(const Rational& r) {
    if (!rat_is_int(r)) throw std::domain_error("rat_to_int: not an integer");
    return numerator(r).convert_to<std::int64_t>();
}

/// gcd of |a|,|b| over rationals: gcd of numerators / lcm of denominators.
inline Rational rat_gcd(const Rational& a, const Rational& b) {
    if (a.is_zero()) return abs(b);
    if (b.is_zero()) return abs(a);
    BigInt gn = gcd(numerator(a), numerator(b));
    BigInt ld = lcm(denominator(a), denominator(b));
    if (gn < 0) gn = -gn;
    return Rational(gn) / Rational(ld);
}

}  // namespace flowsym
