#pragma once

#include "hspde/error.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>

namespace hspde {

/// Exact rational number over int64 with overflow-checked arithmetic.
class Rational {
public:
    constexpr Rational() = default;
    Rational(std::int64_t num, std::int64_t den = 1) { assign(num, den); }

    std::int64_t num() const noexcept { return num_; }
    std::int64_t den() const noexcept { return den_; }
    double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    /// Nearest fraction with denominator <= max_den by continued fractions;
    /// empty unless it reproduces x to 1e-12 relative accuracy.
    static std::optional<Rational> from_double(double x, std::int64_t max_den = 1'000'000) {
        if (!std::isfinite(x) || std::abs(x) > 1e12) {
            return std::nullopt;
        }
        std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
        double r = x;
        for (int iter = 0; iter < 64; ++iter) {
            const double a = std::floor(r);
            const auto ai = static_cast<std::int64_t>(a);
            const std::int64_t h2 = ai * h1 + h0;
            const std::int64_t k2 = ai * k1 + k0;
            if (k2 > max_den) {
                break;
            }
            h0 = h1;
            h1 = h2;
            k0 = k1;
            k1 = k2;
            const double approx = static_cast<double>(h1) / static_cast<double>(k1);
            if (std::abs(approx - x) <= 1e-12 * std::max(1.0, std::abs(x))) {
                return Rational(h1, k1);
            }
            const double frac = r - a;
            if (frac < 1e-15) {
                break;
            }
            r = 1.0 / frac;
        }
        return std::nullopt;
    }

    friend Rational operator+(const Rational& a, const Rational& b) {
        return from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                         static_cast<__int128>(a.den_) * b.den_);
    }
    friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        require(b.num_ != 0, "rational division by zero");
        return from_wide(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
    }
    Rational operator-() const { return Rational(-num_, den_); }

    friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend bool operator<(const Rational& a, const Rational& b) {
        return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

    friend std::ostream& operator<<(std::ostream& os, const Rational& r) {
        os << r.num_;
        if (r.den_ != 1) {
            os << '/' << r.den_;
        }
        return os;
    }

private:
    void assign(std::int64_t num, std::int64_t den) {
        require(den != 0, "rational with zero denominator");
        *this = from_wide(num, den);
    }

    static Rational from_wide(__int128 num, __int128 den) {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        __int128 a = num < 0 ? -num : num;
        __int128 b = den;
        while (b != 0) {
            const __int128 t = a % b;
            a = b;
            b = t;
        }
        if (a > 1) {
            num /= a;
            den /= a;
        }
        constexpr auto lim = static_cast<__int128>(std::numeric_limits<std::int64_t>::max());
        if (num > lim || num < -lim || den > lim) {
            fail(ErrorKind::numerical, "rational arithmetic overflow");
        }
        Rational r;
        r.num_ = static_cast<std::int64_t>(num);
        r.den_ = static_cast<std::int64_t>(den);
        return r;
    }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

} // namespace hspde
