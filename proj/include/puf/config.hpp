#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace puf {

/// Plain key-value config with [section] headers; keys are stored as
/// "section.key" ("" section for keys before any header). '#' starts a
/// comment line.
struct ConfigFile {
    std::map<std::string, std::string> values;

    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    bool get_bool(const std::string& key, bool def) const;
};

/// Priority: explicit flag > config "seed" key > PUF_SEED env var > 42.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag_value,
                           const ConfigFile& cfg);

void write_run_manifest(const std::string& out_dir, const std::string& subcommand,
                        const std::vector<std::pair<std::string, std::string>>& settings,
                        std::uint64_t seed, double wall_seconds);

void ensure_dir(const std::string& path);

}  // namespace puf
