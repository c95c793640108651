#pragma once

// Self-describing binary container for checkpoints: a JSON header (config,
// array table) followed by raw little-endian doubles. Round-trips are
// bit-exact, which the training-resume contract depends on.

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace dh {

struct ArrayEntry {
    std::vector<int> shape;
    std::vector<double> data;
};

class Archive {
public:
    nlohmann::json config;

    void add(const std::string& name, std::vector<int> shape, std::vector<double> data);
    bool has(const std::string& name) const { return arrays_.count(name) > 0; }
    const ArrayEntry& get(const std::string& name) const;
    const std::map<std::string, ArrayEntry>& arrays() const { return arrays_; }

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

private:
    std::map<std::string, ArrayEntry> arrays_;
};

// FNV-1a over the canonical dump of a JSON value; used as a config hash
uint64_t json_hash(const nlohmann::json& j);

}  // namespace dh
