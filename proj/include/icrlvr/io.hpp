#pragma once
// Line-oriented file formats: task sets and demonstration sets (tab-separated
// records, space-separated token ids, one-line header with vocab size and
// format version) and the plain-text key = value run configuration.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "icrlvr/core.hpp"
#include "icrlvr/corpus.hpp"
#include "icrlvr/vocab.hpp"

namespace icr {

namespace detail {

inline std::string render_tokens(const Sequence& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(s[i]);
    }
    return out;
}

inline Sequence parse_tokens(const std::string& text) {
    Sequence out;
    std::istringstream ss(text);
    int tok = 0;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

}  // namespace detail

inline void save_tasks(const std::vector<Task>& tasks, const Vocab& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_tasks: cannot open " + path);
    out << "icrlvr-tasks\tv1\tvocab=" << v.size << "\n";
    for (const Task& t : tasks)
        out << family_name(t.family) << "\t" << detail::render_tokens(t.question) << "\t"
            << detail::render_tokens(t.canonical) << "\n";
    if (!out) throw ConfigError("save_tasks: write failed for " + path);
}

inline std::vector<Task> load_tasks(const Vocab& v, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_tasks: cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("icrlvr-tasks\tv1\t", 0) != 0)
        throw ConfigError("load_tasks: unrecognized header in " + path);
    if (header != "icrlvr-tasks\tv1\tvocab=" + std::to_string(v.size))
        throw ConfigError("load_tasks: vocab size mismatch in " + path);
    std::vector<Task> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_tabs(line);
        if (fields.size() != 3) throw ConfigError("load_tasks: malformed record in " + path);
        const Sequence question = detail::parse_tokens(fields[1]);
        auto rebuilt = task_from_question(v, question);
        if (!rebuilt || family_name(rebuilt->family) != fields[0] ||
            rebuilt->canonical != detail::parse_tokens(fields[2]))
            throw ConfigError("load_tasks: record does not verify in " + path);
        out.push_back(*rebuilt);
    }
    return out;
}

inline void save_demo_set(const DemoSet& set, const Vocab& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_demo_set: cannot open " + path);
    out << "icrlvr-demos\tv1\tvocab=" << v.size << "\tlabel=" << set.label << "\n";
    for (const Demonstration& d : set.demos)
        out << detail::render_tokens(d.question) << "\t" << detail::render_tokens(d.reference) << "\n";
    if (!out) throw ConfigError("save_demo_set: write failed for " + path);
}

inline DemoSet load_demo_set(const Vocab& v, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_demo_set: cannot open " + path);
    std::string header;
    std::getline(in, header);
    const std::string prefix = "icrlvr-demos\tv1\tvocab=" + std::to_string(v.size) + "\tlabel=";
    if (header.rfind(prefix, 0) != 0)
        throw ConfigError("load_demo_set: unrecognized header in " + path);
    DemoSet out;
    out.label = header.substr(prefix.size());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_tabs(line);
        if (fields.size() != 2) throw ConfigError("load_demo_set: malformed record in " + path);
        Demonstration d;
        d.question = detail::parse_tokens(fields[0]);
        d.reference = detail::parse_tokens(fields[1]);
        if (verify(v, d.question, d.reference) != 1)
            throw ConfigError("load_demo_set: demonstration does not verify in " + path);
        out.demos.push_back(std::move(d));
    }
    if (out.demos.empty()) throw ConfigError("load_demo_set: empty demonstration set in " + path);
    return out;
}

// key = value configuration, '#' starts a comment. Unknown keys are rejected
// against the caller's schema.
inline std::map<std::string, std::string> parse_config_text(std::istream& in,
                                                            const std::set<std::string>& known_keys) {
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const size_t b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_keys.count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (out.count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        out[key] = value;
    }
    return out;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                            const std::set<std::string>& known_keys) {
    std::ifstream in(path);
    if (!in) throw ConfigError("parse_config_file: cannot open " + path);
    return parse_config_text(in, known_keys);
}

}  // namespace icr
