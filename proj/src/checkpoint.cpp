#include "dh/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

using nlohmann::json;

namespace dh {

namespace {
constexpr char kMagic[8] = {'D', 'H', 'C', 'K', 'P', 'T', '0', '1'};
}

void Archive::add(const std::string& name, std::vector<int> shape,
                  std::vector<double> data) {
    long n = 1;
    for (int d : shape) n *= d;
    if (n != static_cast<long>(data.size()))
        throw std::invalid_argument("Archive::add: shape does not match data size for " + name);
    arrays_[name] = ArrayEntry{std::move(shape), std::move(data)};
}

const ArrayEntry& Archive::get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end())
        throw std::runtime_error("Archive: missing array " + name);
    return it->second;
}

void Archive::save(const std::string& path) const {
    json header;
    header["config"] = config;
    json table = json::array();
    uint64_t offset = 0;
    for (const auto& [name, e] : arrays_) {
        json row;
        row["name"] = name;
        row["shape"] = e.shape;
        row["offset"] = offset;
        row["count"] = e.data.size();
        table.push_back(row);
        offset += e.data.size();
    }
    header["arrays"] = table;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Archive::save: cannot open " + path);
    f.write(kMagic, 8);
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, e] : arrays_)
        f.write(reinterpret_cast<const char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("Archive::save: write failed for " + path);
}

Archive Archive::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Archive::load: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("Archive::load: bad magic in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("Archive::load: truncated header in " + path);
    json header = json::parse(hs);

    Archive a;
    a.config = header.value("config", json::object());
    for (const auto& row : header.at("arrays")) {
        ArrayEntry e;
        e.shape = row.at("shape").get<std::vector<int>>();
        size_t count = row.at("count").get<size_t>();
        e.data.resize(count);
        f.read(reinterpret_cast<char*>(e.data.data()),
               static_cast<std::streamsize>(count * sizeof(double)));
        if (!f) throw std::runtime_error("Archive::load: truncated data in " + path);
        a.arrays_[row.at("name").get<std::string>()] = std::move(e);
    }
    return a;
}

uint64_t json_hash(const json& j) {
    std::string s = j.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace dh
