#include "qsm/volume_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>

#include "qsm/errors.hpp"
#include "qsm/io_blob.hpp"

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

namespace qsm {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Payloads are little-endian on disk; big-endian hosts swap through a
// bounce buffer.
void swap_if_needed(double* data, std::int64_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        (void)data;
        (void)count;
    } else {
        for (std::int64_t i = 0; i < count; ++i) {
            unsigned char b[8];
            std::memcpy(b, data + i, 8);
            std::swap(b[0], b[7]);
            std::swap(b[1], b[6]);
            std::swap(b[2], b[5]);
            std::swap(b[3], b[4]);
            std::memcpy(data + i, b, 8);
        }
    }
}

} // namespace

namespace detail {

void write_json_payload(const std::string& path, const nlohmann::json& header,
                        const double* data, std::int64_t count) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    const std::string h = header.dump();
    if (std::fwrite(h.data(), 1, h.size(), f.get()) != h.size() ||
        std::fputc('\n', f.get()) == EOF)
        throw IoError("short write to '" + path + "'");
    if constexpr (std::endian::native == std::endian::little) {
        if (count > 0 &&
            std::fwrite(data, sizeof(double), static_cast<std::size_t>(count),
                        f.get()) != static_cast<std::size_t>(count))
            throw IoError("short write to '" + path + "'");
    } else {
        std::vector<double> bounce(data, data + count);
        swap_if_needed(bounce.data(), count);
        if (count > 0 &&
            std::fwrite(bounce.data(), sizeof(double), static_cast<std::size_t>(count),
                        f.get()) != static_cast<std::size_t>(count))
            throw IoError("short write to '" + path + "'");
    }
    if (std::fflush(f.get()) != 0) throw IoError("short write to '" + path + "'");
}

std::pair<nlohmann::json, std::vector<double>> read_json_payload(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string line;
    line.reserve(256);
    for (;;) {
        const int c = std::fgetc(f.get());
        if (c == EOF) throw IoError(path + ": missing header line");
        if (c == '\n') break;
        line.push_back(static_cast<char>(c));
        if (line.size() > (1u << 20)) throw IoError(path + ": header line too long");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad header: " + e.what());
    }
    std::vector<double> payload;
    std::vector<unsigned char> buf(1 << 16);
    std::vector<unsigned char> pending;
    for (;;) {
        const std::size_t got = std::fread(buf.data(), 1, buf.size(), f.get());
        if (got == 0) break;
        pending.insert(pending.end(), buf.begin(), buf.begin() + got);
    }
    if (pending.size() % sizeof(double) != 0)
        throw IoError(path + ": payload is not a whole number of f64 values");
    payload.resize(pending.size() / sizeof(double));
    if (!payload.empty()) {
        std::memcpy(payload.data(), pending.data(), pending.size());
        swap_if_needed(payload.data(), static_cast<std::int64_t>(payload.size()));
    }
    return {header, payload};
}

} // namespace detail

void save_volume(const Volume3D& v, const std::string& path) {
    v.grid.validate();
    nlohmann::json header{{"magic", "QSMV1"},
                          {"dims", v.grid.dims},
                          {"voxel_size", v.grid.voxel},
                          {"dtype", "f64"},
                          {"order", "x-fastest"}};
    detail::write_json_payload(path, header, v.data.data(),
                               static_cast<std::int64_t>(v.data.size()));
}

Volume3D load_volume(const std::string& path) {
    auto [header, payload] = detail::read_json_payload(path);
    try {
        if (header.at("magic").get<std::string>() != "QSMV1")
            throw IoError(path + ": not a QSMV1 volume");
        if (header.at("dtype").get<std::string>() != "f64")
            throw IoError(path + ": unsupported dtype");
        if (header.at("order").get<std::string>() != "x-fastest")
            throw IoError(path + ": unsupported layout");
        Volume3D v;
        v.grid.dims = header.at("dims").get<std::array<int, 3>>();
        v.grid.voxel = header.at("voxel_size").get<std::array<double, 3>>();
        v.grid.validate();
        if (static_cast<std::int64_t>(payload.size()) != v.grid.count())
            throw IoError(path + ": payload size does not match dims");
        v.data = std::move(payload);
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad header: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(path + ": bad grid: " + e.what());
    }
}

void save_mask(const VoxelMask& m, const std::string& path) {
    Volume3D v(m.grid);
    for (std::size_t i = 0; i < m.flags.size(); ++i)
        v.data[i] = m.flags[i] ? 1.0 : 0.0;
    save_volume(v, path);
}

VoxelMask load_mask(const std::string& path) {
    const Volume3D v = load_volume(path);
    VoxelMask m(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) m.flags[i] = v.data[i] != 0.0 ? 1 : 0;
    return m;
}

} // namespace qsm
