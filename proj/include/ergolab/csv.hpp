#pragma once

// Minimal CSV emission helpers. Numbers use the shortest round-trip decimal
// form from std::to_chars, so identical doubles always print identically.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ergolab/errors.hpp"

namespace ergolab::csv {

inline std::string format(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw Error("csv: number formatting failed");
    return std::string(buf, ptr);
}

inline std::string format(long double x) { return format(static_cast<double>(x)); }

template <class Int>
    requires std::is_integral_v<Int>
std::string format(Int x) {
    return std::to_string(x);
}

inline std::string format(std::string_view s) { return std::string(s); }
inline std::string format(const char* s) { return std::string(s); }
inline std::string format(const std::string& s) { return s; }
inline std::string format(bool b) { return b ? "true" : "false"; }

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void comment(std::string_view text) { os_ << "# " << text << '\n'; }

    void header(std::initializer_list<std::string_view> cols) {
        bool first = true;
        for (auto c : cols) {
            if (!first) os_ << ',';
            os_ << c;
            first = false;
        }
        os_ << '\n';
    }

    template <class... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((os_ << (first ? "" : ",") << format(fields), first = false), ...);
        os_ << '\n';
    }

private:
    std::ostream& os_;
};

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error("csv: cannot parse number '" + std::string(s) + "'");
    return v;
}

} // namespace ergolab::csv
