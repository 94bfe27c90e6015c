#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ssvf/profile.hpp"

namespace ssvf {

struct IoError : SsvfError {
    using SsvfError::SsvfError;
};

inline constexpr const char* format_magic = "SSVF1";

/// FNV-1a on bytes; used to fingerprint the canonical config text.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Gridded field container format
// ---------------------------------------------------------------------------
// Layout (little-endian):
//   5 bytes  magic "SSVF1"
//   u8       rank: 1 vector (3 components), 2 matrix (9 components)
//   u8       mask flag
//   u8       reserved (0)
//   u32      n (nodes per axis)
//   f64      half_width
//   f64      gamma weight
//   f64[...] component-major node data, x-fastest within each component

namespace detail {

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

inline void write_field_file(const std::string& path, const GridSpec& g, double gamma,
                             std::uint8_t rank, bool has_mask, const double* data,
                             std::size_t count) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(format_magic, 5);
    put(os, rank);
    put(os, static_cast<std::uint8_t>(has_mask ? 1 : 0));
    put(os, static_cast<std::uint8_t>(0));
    put(os, static_cast<std::uint32_t>(g.n));
    put(os, g.half_width);
    put(os, gamma);
    os.write(reinterpret_cast<const char*>(data),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace detail

struct FieldFile {
    GridSpec grid;
    double gamma = 0.5;
    int rank = 1;
    bool has_mask = false;
    std::vector<double> data;
};

inline void write_field(const std::string& path, const VectorProfile& f) {
    detail::write_field_file(path, f.grid, f.gamma, 1, f.has_mask, f.data.data(),
                             f.data.size());
}

inline void write_field(const std::string& path, const TensorProfile& f) {
    detail::write_field_file(path, f.grid, f.gamma, 2, f.has_mask, f.data.data(),
                             f.data.size());
}

inline FieldFile read_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, format_magic, 5) != 0)
        throw IoError("not a field container: " + path);
    std::uint8_t rank = 0, mask = 0, reserved = 0;
    std::uint32_t n = 0;
    FieldFile f;
    detail::get(is, rank);
    detail::get(is, mask);
    detail::get(is, reserved);
    detail::get(is, n);
    detail::get(is, f.grid.half_width);
    detail::get(is, f.gamma);
    if (!is || (rank != 1 && rank != 2)) throw IoError("corrupt field header: " + path);
    f.grid.n = static_cast<int>(n);
    f.grid.validate();
    f.rank = rank;
    f.has_mask = mask != 0;
    const std::size_t comps = rank == 1 ? 3 : 9;
    f.data.resize(comps * f.grid.size());
    is.read(reinterpret_cast<char*>(f.data.data()),
            static_cast<std::streamsize>(f.data.size() * sizeof(double)));
    if (!is || static_cast<std::size_t>(is.gcount()) != f.data.size() * sizeof(double))
        throw IoError("truncated field data: " + path);
    return f;
}

inline VectorProfile read_vector_field(const std::string& path) {
    FieldFile f = read_field(path);
    if (f.rank != 1) throw IoError("expected a vector field: " + path);
    VectorProfile v = VectorProfile::zeros(f.grid, f.gamma);
    v.has_mask = f.has_mask;
    v.data = std::move(f.data);
    return v;
}

inline TensorProfile read_tensor_field(const std::string& path) {
    FieldFile f = read_field(path);
    if (f.rank != 2) throw IoError("expected a matrix field: " + path);
    TensorProfile t = TensorProfile::zeros(f.grid, f.gamma);
    t.has_mask = f.has_mask;
    t.data = std::move(f.data);
    return t;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Round-trip-exact numeric CSV: every value printed with %.17g.
struct CsvWriter {
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : os_(path), cols_(header.size()) {
        if (!os_) throw IoError("cannot open for writing: " + path);
        for (std::size_t i = 0; i < header.size(); ++i)
            os_ << (i ? "," : "") << header[i];
        os_ << "\n";
    }

    static std::string format(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }

    void row(const std::vector<double>& values) {
        if (values.size() != cols_) throw IoError("csv row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i)
            os_ << (i ? "," : "") << format(values[i]);
        os_ << "\n";
    }

    void row_text(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw IoError("csv row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << "\n";
    }

    void close() { os_.close(); }

  private:
    std::ofstream os_;
    std::size_t cols_;
};

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// One manifest per run directory: canonical-config fingerprint, tool
/// version, produced files with their roles, and headline metrics. The wall
/// time is informational and excluded from determinism comparisons.
struct RunManifest {
    std::string config_text;
    std::string config_hash_hex;  // kept verbatim when re-writing a parsed manifest
    double wall_seconds = 0.0;
    std::vector<std::pair<std::string, std::string>> files;  // name, role
    std::map<std::string, double> metrics;

    void add_file(const std::string& name, const std::string& role) {
        files.emplace_back(name, role);
    }
    bool has_file(const std::string& name) const {
        for (const auto& f : files)
            if (f.first == name) return true;
        return false;
    }
    void add_file_once(const std::string& name, const std::string& role) {
        if (!has_file(name)) files.emplace_back(name, role);
    }
    void add_metric(const std::string& name, double value) { metrics[name] = value; }

    std::string to_json() const {
        nlohmann::ordered_json j;
        j["format"] = "ssvf-manifest-v1";
        j["version"] = version_string;
        std::string hash = config_hash_hex;
        if (!config_text.empty() || hash.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "0x%016llx",
                          static_cast<unsigned long long>(fnv1a64(config_text)));
            hash = buf;
        }
        j["config_fnv1a64"] = hash;
        j["wall_seconds"] = wall_seconds;
        j["files"] = nlohmann::ordered_json::array();
        for (const auto& [name, role] : files)
            j["files"].push_back({{"name", name}, {"role", role}});
        j["metrics"] = nlohmann::ordered_json::object();
        for (const auto& [name, value] : metrics) j["metrics"][name] = value;
        return j.dump(2) + "\n";
    }

    void write(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot open for writing: " + path);
        os << to_json();
        if (!os) throw IoError("write failed: " + path);
    }

    static RunManifest parse(const std::string& text) {
        nlohmann::json j = nlohmann::json::parse(text);
        RunManifest m;
        m.config_hash_hex = j.value("config_fnv1a64", "");
        m.wall_seconds = j.value("wall_seconds", 0.0);
        for (const auto& f : j.value("files", nlohmann::json::array()))
            m.files.emplace_back(f.value("name", ""), f.value("role", ""));
        if (j.contains("metrics"))
            for (auto it = j["metrics"].begin(); it != j["metrics"].end(); ++it)
                m.metrics[it.key()] = it.value().get<double>();
        return m;
    }
};

}  // namespace ssvf
