#pragma once

// Line-oriented configuration text shared by scenario and config files.
//
//   # comment
//   [section]
//   key = value                 (scalar setting)
//   record k1=v1 k2=v2 ...      (typed record, repeated freely)

#include <charconv>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace hudsim::kv {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> to_int(std::string_view s) {
    s = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

struct Setting {
    std::string value;
    int line = 0;
};

/// A `record k=v ...` line.
class Record {
public:
    Record(std::string source, std::string type, int line) : source_(std::move(source)), type_(std::move(type)), line_(line) {}

    const std::string& type() const { return type_; }
    int line() const { return line_; }

    void set(std::string key, std::string value) {
        if (fields_.contains(key)) throw error(key, "duplicate field");
        fields_.emplace(std::move(key), std::move(value));
    }

    bool has(const std::string& key) const { return fields_.contains(key); }

    const std::string& text(const std::string& key) const {
        const auto it = fields_.find(key);
        if (it == fields_.end()) throw error(key, "missing required field");
        return it->second;
    }

    std::string text_or(const std::string& key, std::string fallback) const {
        return has(key) ? text(key) : fallback;
    }

    double number(const std::string& key) const {
        const auto v = to_double(text(key));
        if (!v) throw error(key, "expected a number, got '" + text(key) + "'");
        return *v;
    }

    double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    long long integer(const std::string& key) const {
        const auto v = to_int(text(key));
        if (!v) throw error(key, "expected an integer, got '" + text(key) + "'");
        return *v;
    }

    long long integer_or(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }

    bool flag_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = text(key);
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        throw error(key, "expected a boolean, got '" + v + "'");
    }

    /// Comma-separated numbers.
    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        for (auto part : split(text(key), ',')) {
            const auto v = to_double(part);
            if (!v) throw error(key, "expected comma-separated numbers, got '" + text(key) + "'");
            out.push_back(*v);
        }
        return out;
    }

    /// Throws for any field outside `allowed`.
    void check_fields(std::initializer_list<std::string_view> allowed) const {
        for (const auto& [k, v] : fields_) {
            bool ok = false;
            for (auto a : allowed) ok = ok || a == k;
            if (!ok) throw error(k, "unknown field for '" + type_ + "' record");
        }
    }

    ParseError error(const std::string& field, const std::string& what) const {
        return ParseError(source_, line_, field, what);
    }

private:
    std::string source_;
    std::string type_;
    int line_;
    std::map<std::string, std::string> fields_;
};

struct Section {
    std::string name;
    int line = 0;
    std::map<std::string, Setting> settings;
    std::vector<Record> records;
};

class Document {
public:
    static Document parse(std::string_view text, std::string source = {}) {
        Document doc;
        doc.source_ = std::move(source);
        Section* current = nullptr;
        int line_no = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            const auto end = text.find('\n', start);
            std::string_view raw = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
            start = end == std::string_view::npos ? text.size() + 1 : end + 1;
            ++line_no;

            const auto hash = raw.find('#');
            std::string_view line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
            if (line.empty()) continue;

            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3)
                    throw ParseError(doc.source_, line_no, "", "malformed section header '" + std::string(line) + "'");
                const std::string name(trim(line.substr(1, line.size() - 2)));
                if (doc.find(name)) throw ParseError(doc.source_, line_no, "", "duplicate section [" + name + "]");
                doc.sections_.push_back(Section{name, line_no, {}, {}});
                current = &doc.sections_.back();
                continue;
            }
            if (!current) throw ParseError(doc.source_, line_no, "", "content before the first [section]");

            const auto eq = line.find('=');
            if (eq != std::string_view::npos && trim(line.substr(0, eq)).find_first_of(" \t") == std::string_view::npos) {
                const std::string key(trim(line.substr(0, eq)));
                const std::string value(trim(line.substr(eq + 1)));
                if (key.empty()) throw ParseError(doc.source_, line_no, "", "empty key");
                if (current->settings.contains(key)) throw ParseError(doc.source_, line_no, key, "duplicate setting");
                current->settings.emplace(key, Setting{value, line_no});
                continue;
            }

            std::istringstream tokens{std::string(line)};
            std::string type;
            tokens >> type;
            Record rec(doc.source_, type, line_no);
            std::string tok;
            while (tokens >> tok) {
                const auto pos = tok.find('=');
                if (pos == std::string::npos || pos == 0)
                    throw ParseError(doc.source_, line_no, tok, "expected key=value");
                rec.set(tok.substr(0, pos), tok.substr(pos + 1));
            }
            current->records.push_back(std::move(rec));
        }
        return doc;
    }

    const std::string& source() const { return source_; }
    const std::vector<Section>& sections() const { return sections_; }

    const Section* find(std::string_view name) const {
        for (const auto& s : sections_)
            if (s.name == name) return &s;
        return nullptr;
    }

private:
    std::string source_;
    std::vector<Section> sections_;
};

/// Reads an optional numeric setting into `target`, leaving it untouched when absent.
inline void read_number(const Document& doc, const Section& section, const std::string& key, double& target) {
    const auto it = section.settings.find(key);
    if (it == section.settings.end()) return;
    const auto v = to_double(it->second.value);
    if (!v) throw ParseError(doc.source(), it->second.line, key, "expected a number, got '" + it->second.value + "'");
    target = *v;
}

}  // namespace hudsim::kv
