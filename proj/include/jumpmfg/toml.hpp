#pragma once

// Minimal TOML-subset reader for scenario files: tables, arrays of tables,
// and key/value pairs whose values are strings, numbers, booleans or
// single-line arrays of scalars. Parse failures carry line numbers.

#include <cctype>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "jumpmfg/errors.hpp"

namespace jumpmfg::toml {

struct Value {
    enum class Kind { string, number, boolean, array, table, table_array };

    Kind kind = Kind::table;
    std::string str;
    double num = 0.0;
    bool flag = false;
    std::vector<Value> items;                // array elements or table-array entries
    std::map<std::string, Value> entries;    // table children

    bool is_table() const { return kind == Kind::table; }

    const Value* find(const std::string& key) const {
        if (kind != Kind::table) return nullptr;
        auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    }
};

namespace detail {

inline void fail(std::size_t line, const std::string& what) {
    throw ConfigError("scenario parse error at line " + std::to_string(line) + ": " + what);
}

inline std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Remove a trailing comment that is not inside a string literal.
inline std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

inline std::vector<std::string> split_path(const std::string& s, std::size_t line) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == '.') {
            if (cur.empty()) fail(line, "empty name in table path '" + s + "'");
            parts.push_back(strip(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (strip(cur).empty()) fail(line, "empty name in table path '" + s + "'");
    parts.push_back(strip(cur));
    return parts;
}

inline Value parse_scalar(const std::string& raw, std::size_t line) {
    const std::string s = strip(raw);
    if (s.empty()) fail(line, "missing value");
    Value v;
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"') fail(line, "unterminated string");
        v.kind = Value::Kind::string;
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            if (s[i] == '\\' && i + 2 < s.size()) {
                ++i;
                switch (s[i]) {
                    case 'n': v.str += '\n'; break;
                    case 't': v.str += '\t'; break;
                    case '"': v.str += '"'; break;
                    case '\\': v.str += '\\'; break;
                    default: fail(line, std::string("unsupported escape '\\") + s[i] + "'");
                }
            } else {
                v.str += s[i];
            }
        }
        return v;
    }
    if (s == "true" || s == "false") {
        v.kind = Value::Kind::boolean;
        v.flag = s == "true";
        return v;
    }
    try {
        std::size_t used = 0;
        v.num = std::stod(s, &used);
        if (used != s.size()) fail(line, "trailing characters after number '" + s + "'");
        v.kind = Value::Kind::number;
        return v;
    } catch (const std::invalid_argument&) {
        fail(line, "unrecognized value '" + s + "'");
    } catch (const std::out_of_range&) {
        fail(line, "number out of range '" + s + "'");
    }
    return v;
}

inline Value parse_value(const std::string& raw, std::size_t line) {
    const std::string s = strip(raw);
    if (!s.empty() && s.front() == '[') {
        if (s.back() != ']') fail(line, "unterminated array (arrays must be single-line)");
        Value v;
        v.kind = Value::Kind::array;
        std::string body = s.substr(1, s.size() - 2);
        std::string cur;
        bool in_str = false;
        for (char c : body) {
            if (c == '"') in_str = !in_str;
            if (c == ',' && !in_str) {
                v.items.push_back(parse_scalar(cur, line));
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!strip(cur).empty()) v.items.push_back(parse_scalar(cur, line));
        return v;
    }
    return parse_scalar(s, line);
}

}  // namespace detail

// Parse a whole document from text. Supported grammar: `[a.b]` tables,
// `[[a.b]]` arrays of tables, `key = value` pairs, `#` comments.
inline Value parse(const std::string& text) {
    Value root;
    Value* current = &root;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        line = detail::strip(detail::strip_comment(line));
        if (line.empty()) continue;

        if (line.front() == '[') {
            const bool is_array = line.size() > 1 && line[1] == '[';
            const std::string close = is_array ? "]]" : "]";
            if (line.size() < 2 * close.size() ||
                line.substr(line.size() - close.size()) != close)
                detail::fail(line_no, "malformed table header '" + line + "'");
            const std::string path_str =
                line.substr(close.size(), line.size() - 2 * close.size());
            const auto path = detail::split_path(path_str, line_no);
            Value* node = &root;
            for (std::size_t i = 0; i < path.size(); ++i) {
                const bool last = i + 1 == path.size();
                auto& slot = node->entries[path[i]];
                if (last && is_array) {
                    if (slot.entries.empty() && slot.items.empty())
                        slot.kind = Value::Kind::table_array;
                    if (slot.kind != Value::Kind::table_array)
                        detail::fail(line_no, "'" + path[i] + "' is not an array of tables");
                    slot.items.emplace_back();
                    slot.items.back().kind = Value::Kind::table;
                    node = &slot.items.back();
                } else {
                    if (slot.kind == Value::Kind::table_array) {
                        if (slot.items.empty()) slot.items.emplace_back();
                        node = &slot.items.back();
                    } else if (slot.is_table()) {
                        node = &slot;
                    } else {
                        detail::fail(line_no, "'" + path[i] + "' is not a table");
                    }
                }
            }
            current = node;
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            detail::fail(line_no, "expected 'key = value' but got '" + line + "'");
        const std::string key = detail::strip(line.substr(0, eq));
        if (key.empty()) detail::fail(line_no, "empty key");
        if (current->entries.count(key))
            detail::fail(line_no, "duplicate key '" + key + "'");
        current->entries[key] = detail::parse_value(line.substr(eq + 1), line_no);
    }
    return root;
}

}  // namespace jumpmfg::toml
