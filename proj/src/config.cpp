#include "puf/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "puf/msio.hpp"

namespace puf {

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t");
        line = line.substr(b, e - b + 1);
        if (line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            std::size_t a = s.find_first_not_of(" \t");
            if (a == std::string::npos) {
                s.clear();
                return;
            }
            std::size_t z = s.find_last_not_of(" \t");
            s = s.substr(a, z - a + 1);
        };
        trim(key);
        trim(val);
        cfg.values[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    return parse(read_file(path));
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
}

std::string ConfigFile::get_or(const std::string& key, const std::string& def) const {
    auto v = get(key);
    return v ? *v : def;
}

double ConfigFile::get_double(const std::string& key, double def) const {
    auto v = get(key);
    return v ? std::stod(*v) : def;
}

int ConfigFile::get_int(const std::string& key, int def) const {
    auto v = get(key);
    return v ? std::stoi(*v) : def;
}

bool ConfigFile::get_bool(const std::string& key, bool def) const {
    auto v = get(key);
    if (!v) return def;
    return *v == "1" || *v == "true" || *v == "yes" || *v == "on";
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag_value,
                           const ConfigFile& cfg) {
    if (flag_value) return *flag_value;
    if (auto v = cfg.get("seed")) return std::stoull(*v);
    if (const char* env = std::getenv("PUF_SEED")) return std::stoull(env);
    return 42;
}

void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

void write_run_manifest(const std::string& out_dir, const std::string& subcommand,
                        const std::vector<std::pair<std::string, std::string>>& settings,
                        std::uint64_t seed, double wall_seconds) {
    std::ostringstream out;
    out << "subcommand = " << subcommand << "\n";
    out << "version = 1.0\n";
    out << "seed = " << seed << "\n";
    for (const auto& [k, v] : settings) out << k << " = " << v << "\n";
    out << "wall_seconds = " << wall_seconds << "\n";
    write_file((std::filesystem::path(out_dir) / "run_manifest.txt").string(), out.str());
}

}  // namespace puf
