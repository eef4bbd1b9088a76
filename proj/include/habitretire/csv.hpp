#pragma once

#include "habitretire/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace habitretire {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

/// 64-bit FNV-1a hash.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

using Cell = std::variant<double, long, std::string>;

/// In-memory table with a fixed column order.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size()) throw Error("Table::add: row width does not match the header");
        rows.push_back(std::move(row));
    }
};

inline std::string format_cell(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    if (const auto* l = std::get_if<long>(&c)) return std::to_string(*l);
    return std::get<std::string>(c);
}

/// Writes an optional '#' provenance line, the header and the rows.
inline void write_csv(std::ostream& os, const Table& t, std::string_view provenance = {}) {
    if (!provenance.empty()) os << "# " << provenance << '\n';
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_cell(row[i]);
        os << '\n';
    }
}

}  // namespace habitretire
