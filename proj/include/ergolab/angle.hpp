#pragma once

// Angles measured in turns (1 turn = 2 pi), stored as an exact fraction so
// that frac(n * angle) can be reduced without phase drift for large n.
//
// Two flavours share the representation:
//   - rational angles p/q, taken at face value;
//   - decimal approximants d_1 d_2 ... d_k / 10^k of an irrational angle. The
//     stored fraction is exact, but the angle is flagged as irrational, which
//     matters for resonance matching.

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <string_view>

#include "ergolab/errors.hpp"

namespace ergolab {

using u128 = unsigned __int128;

namespace detail {

inline u128 gcd_u128(u128 a, u128 b) {
    while (b != 0) {
        const u128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

// (a * b) mod m for a, b < m < 2^126.
inline u128 mulmod(u128 a, u128 b, u128 m) {
    constexpr u128 limit = static_cast<u128>(1) << 64;
    if (a < limit && b < limit) return (a * b) % m;
    u128 result = 0;
    a %= m;
    while (b != 0) {
        if (b & 1) {
            result += a;
            if (result >= m) result -= m;
        }
        a += a;
        if (a >= m) a -= m;
        b >>= 1;
    }
    return result;
}

inline std::string u128_to_string(u128 v) {
    if (v == 0) return "0";
    std::string s;
    while (v != 0) {
        s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    return s;
}

inline long double ratio(u128 num, u128 den) {
    // Split to keep 64+ significant bits through the conversion.
    const u128 whole = num / den;
    const u128 rem = num % den;
    return static_cast<long double>(whole) + static_cast<long double>(rem) / static_cast<long double>(den);
}

} // namespace detail

class Angle {
public:
    /// Largest denominator accepted (keeps doubling inside 128 bits).
    static constexpr u128 max_denominator = static_cast<u128>(1) << 124;
    static constexpr int max_decimal_digits = 36;

    Angle() = default;

    static Angle rational(std::int64_t p, std::int64_t q) {
        if (q <= 0) throw DomainError("Angle: denominator must be positive");
        const auto uq = static_cast<u128>(q);
        const std::int64_t r = ((p % q) + q) % q;
        return Angle(static_cast<u128>(r), uq, true);
    }

    /// Decimal approximant of an irrational angle, from a long double in turns.
    static Angle from_turns(long double turns) {
        if (!std::isfinite(turns)) throw DomainError("Angle: non-finite turns");
        long double f = turns - std::floor(turns);
        constexpr long double scale = 18446744073709551616.0L; // 2^64
        auto num = static_cast<u128>(f * scale);
        const u128 den = static_cast<u128>(1) << 64;
        return Angle(num % den, den, false);
    }

    /// "p/q" (rational), an integer (rational), or a decimal string such as
    /// "0.41421356237309504880" (decimal approximant, up to 36 fractional
    /// digits). A leading '-' is accepted.
    static Angle parse(std::string_view s) {
        if (s.empty()) throw DomainError("Angle: empty string");
        bool negative = false;
        if (s.front() == '-') {
            negative = true;
            s.remove_prefix(1);
        }
        if (const auto slash = s.find('/'); slash != std::string_view::npos) {
            const auto p = parse_uint(s.substr(0, slash));
            const auto q = parse_uint(s.substr(slash + 1));
            if (q == 0) throw DomainError("Angle: zero denominator in '" + std::string(s) + "'");
            if (q > max_denominator) throw DomainError("Angle: denominator too large");
            Angle a(p % q, q, true);
            return negative ? -a : a;
        }
        const auto dot = s.find('.');
        if (dot == std::string_view::npos) {
            Angle a(0, 1, true);
            (void)parse_uint(s);
            return a;
        }
        const auto frac = s.substr(dot + 1);
        if (frac.empty() || frac.size() > static_cast<std::size_t>(max_decimal_digits))
            throw DomainError("Angle: decimal needs 1.." + std::to_string(max_decimal_digits) + " fractional digits");
        (void)parse_uint(s.substr(0, dot));
        u128 den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        Angle a(parse_uint(frac) % den, den, false);
        return negative ? -a : a;
    }

    bool is_rational() const { return rational_; }
    u128 numerator() const { return num_; }
    u128 denominator() const { return den_; }
    bool is_zero() const { return num_ == 0; }

    /// Value in [0, 1).
    long double turns() const { return detail::ratio(num_, den_); }

    /// frac(n * angle) in [0, 1), reduced exactly before conversion.
    long double frac_times(std::int64_t n) const {
        const u128 reduced = n >= 0 ? static_cast<u128>(n) % den_
                                    : (den_ - (static_cast<u128>(-(n + 1)) + 1) % den_) % den_;
        return detail::ratio(detail::mulmod(reduced, num_, den_), den_);
    }

    Angle times(std::int64_t n) const {
        const u128 reduced = n >= 0 ? static_cast<u128>(n) % den_
                                    : (den_ - (static_cast<u128>(-(n + 1)) + 1) % den_) % den_;
        return Angle(detail::mulmod(reduced, num_, den_), den_, rational_);
    }

    /// exp(2 pi i n angle).
    std::complex<double> unit_power(std::int64_t n) const { return unit(frac_times(n)); }

    std::complex<double> value() const { return unit(turns()); }

    Angle operator-() const { return Angle((den_ - num_) % den_, den_, rational_); }

    friend Angle operator+(const Angle& a, const Angle& b) {
        const u128 g = detail::gcd_u128(a.den_, b.den_);
        const u128 fa = b.den_ / g;
        if (a.den_ > max_denominator / fa) {
            // Denominators too far apart for an exact sum; fall back to 2^64 resolution.
            return from_turns(a.turns() + b.turns());
        }
        const u128 den = a.den_ * fa;
        const u128 na = detail::mulmod(a.num_, fa, den);
        const u128 nb = detail::mulmod(b.num_, a.den_ / g, den);
        u128 num = na + nb;
        if (num >= den) num -= den;
        return Angle(num, den, a.rational_ && b.rational_);
    }

    friend Angle operator-(const Angle& a, const Angle& b) { return a + (-b); }

    friend bool operator==(const Angle& a, const Angle& b) {
        return a.rational_ == b.rational_ && a.num_ == b.num_ && a.den_ == b.den_;
    }

    std::string to_string() const {
        if (rational_) return detail::u128_to_string(num_) + "/" + detail::u128_to_string(den_);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.21Lf", turns());
        return buf;
    }

    /// exp(2 pi i t) for t in turns, evaluated in extended precision.
    static std::complex<double> unit(long double t) {
        t -= std::floor(t);
        if (t >= 0.5L) t -= 1.0L;
        const long double phi = 2.0L * std::numbers::pi_v<long double> * t;
        return {static_cast<double>(std::cos(phi)), static_cast<double>(std::sin(phi))};
    }

private:
    Angle(u128 num, u128 den, bool rational) : num_(num), den_(den), rational_(rational) {
        if (rational_) {
            const u128 g = detail::gcd_u128(num_, den_);
            if (g > 1) {
                num_ /= g;
                den_ /= g;
            }
        }
    }

    static u128 parse_uint(std::string_view s) {
        if (s.empty()) return 0;
        u128 v = 0;
        for (char c : s) {
            if (c < '0' || c > '9') throw DomainError("Angle: bad digit in '" + std::string(s) + "'");
            v = v * 10 + static_cast<u128>(c - '0');
            if (v > max_denominator) throw DomainError("Angle: number too large");
        }
        return v;
    }

    u128 num_ = 0;
    u128 den_ = 1;
    bool rational_ = true;
};

} // namespace ergolab
