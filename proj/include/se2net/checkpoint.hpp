#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/layers.hpp"

namespace se2net {

struct NamedArray {
    std::string name;
    std::vector<double> values;
    friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/**
 * @brief Serialized training state.
 *
 * Binary layout (native endianness): magic "SE2NCKPT", u32 version, u64 iteration,
 * config text, then three sections (params, buffers, optimizer velocity), each a u64
 * count of {name, u64 length, float64[length]} records. Strings are u64 length + bytes.
 * Values are stored as float64, so float32 models round-trip exactly.
 */
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr char kMagic[8] = {'S', 'E', '2', 'N', 'C', 'K', 'P', 'T'};

    std::uint32_t version = kVersion;
    std::uint64_t iteration = 0;
    std::string config_text;
    std::vector<NamedArray> params;
    std::vector<NamedArray> buffers;
    std::vector<NamedArray> velocity;

    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof kMagic);
        put(out, version);
        put(out, iteration);
        put_string(out, config_text);
        for (const auto* section : {&params, &buffers, &velocity}) {
            put(out, static_cast<std::uint64_t>(section->size()));
            for (const NamedArray& a : *section) {
                put_string(out, a.name);
                put(out, static_cast<std::uint64_t>(a.values.size()));
                out.write(reinterpret_cast<const char*>(a.values.data()),
                          static_cast<std::streamsize>(a.values.size() * sizeof(double)));
            }
        }
        if (!out) throw IoError("failed writing checkpoint " + path.string());
    }

    static Checkpoint load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint " + path.string());
        char magic[sizeof kMagic];
        in.read(magic, sizeof magic);
        if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError(path.string() + ": not a checkpoint");
        Checkpoint c;
        c.version = get<std::uint32_t>(in);
        if (c.version != kVersion) throw IoError(path.string() + ": unsupported checkpoint version");
        c.iteration = get<std::uint64_t>(in);
        c.config_text = get_string(in);
        for (auto* section : {&c.params, &c.buffers, &c.velocity}) {
            const auto count = get<std::uint64_t>(in);
            for (std::uint64_t i = 0; i < count; ++i) {
                NamedArray a;
                a.name = get_string(in);
                a.values.resize(get<std::uint64_t>(in));
                in.read(reinterpret_cast<char*>(a.values.data()),
                        static_cast<std::streamsize>(a.values.size() * sizeof(double)));
                section->push_back(std::move(a));
            }
        }
        if (!in) throw IoError(path.string() + ": truncated checkpoint");
        return c;
    }

private:
    template <class V>
    static void put(std::ofstream& out, V v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void put_string(std::ofstream& out, const std::string& s) {
        put(out, static_cast<std::uint64_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    template <class V>
    static V get(std::ifstream& in) {
        V v{};
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw IoError("truncated checkpoint");
        return v;
    }
    static std::string get_string(std::ifstream& in) {
        const auto n = get<std::uint64_t>(in);
        if (n > (1ULL << 32)) throw IoError("corrupt checkpoint string");
        std::string s(n, '\0');
        in.read(s.data(), static_cast<std::streamsize>(n));
        return s;
    }
};

template <class T>
std::vector<NamedArray> snapshot(const std::vector<Param<T>*>& params) {
    std::vector<NamedArray> out;
    for (const Param<T>* p : params) out.push_back({p->name, {p->value.begin(), p->value.end()}});
    return out;
}

/**
 * @brief Copies stored arrays into matching parameters. Every parameter must be
 * present unless `prefix` is given, in which case only names starting with it
 * are restored (and must be present).
 */
template <class T>
void restore(const std::vector<Param<T>*>& params, const std::vector<NamedArray>& stored,
             const std::string& prefix = {}) {
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& a : stored) by_name[a.name] = &a;
    for (Param<T>* p : params) {
        if (!prefix.empty() && p->name.rfind(prefix, 0) != 0) continue;
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw IoError("checkpoint lacks '" + p->name + "'");
        if (it->second->values.size() != p->value.size()) throw IoError("checkpoint size mismatch for '" + p->name + "'");
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->second->values[i]);
    }
}

}  // namespace se2net
