#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pomr/types.hpp"

namespace pomr::detail {

using nlohmann::json;

inline json code_to_json(const Code& code) {
    return json{{"id", code.id()}, {"system", std::string(to_string(code.system()))}};
}

inline Code code_from_json(const json& j) {
    if (!j.is_object()) throw Error("code must be an object with system and id");
    const auto system = parse_code_system(j.at("system").get<std::string>());
    if (!system) throw Error("unknown coding system '" + j.at("system").get<std::string>() + "'");
    return Code(*system, j.at("id").get<std::string>());
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace pomr::detail
