#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "inpaint/common.hpp"

namespace inpaint {

// Checkpoint container. Binary layout, little-endian:
//
//   bytes 0..7   magic "INPTCKPT"
//   u32          version (1)
//   u64          step counter
//   u32          config length, followed by the canonical config JSON
//   u32          record count
//   per record, sorted by name:
//     u32 name length, name bytes
//     u8  dtype (0 = f64, 1 = f32)
//     u32 ndim, i64 extents
//     u64 payload byte length, raw values
//
// save -> load -> save reproduces the file byte for byte: the config echo is
// kept verbatim, record order is canonical and payloads are raw bits.
struct CheckpointRecord {
    uint8_t dtype = 0;
    Shape shape;
    std::vector<unsigned char> payload;
};

struct CheckpointFile {
    uint64_t step = 0;
    std::string config_json;
    std::map<std::string, CheckpointRecord> records;  // sorted by name
};

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    require<DataError>(in.good(), path, ": truncated checkpoint");
    return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'I', 'N', 'P', 'T', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const CheckpointFile& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require<DataError>(out.good(), path, ": cannot open for writing");
    out.write(kCheckpointMagic, 8);
    detail::write_pod<uint32_t>(out, kCheckpointVersion);
    detail::write_pod<uint64_t>(out, ckpt.step);
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.config_json.size()));
    out.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.records.size()));
    for (const auto& [name, rec] : ckpt.records) {
        detail::write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<uint8_t>(out, rec.dtype);
        detail::write_pod<uint32_t>(out, static_cast<uint32_t>(rec.shape.size()));
        for (int64_t d : rec.shape) detail::write_pod<int64_t>(out, d);
        detail::write_pod<uint64_t>(out, rec.payload.size());
        out.write(reinterpret_cast<const char*>(rec.payload.data()),
                  static_cast<std::streamsize>(rec.payload.size()));
    }
    require<DataError>(out.good(), path, ": write failed");
}

inline CheckpointFile load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<DataError>(in.good(), path, ": cannot open checkpoint");
    char magic[8];
    in.read(magic, 8);
    require<DataError>(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, path,
                       ": not a checkpoint file (bad magic)");
    const auto version = detail::read_pod<uint32_t>(in, path);
    require<DataError>(version == kCheckpointVersion, path, ": unsupported checkpoint version ",
                       version);
    CheckpointFile ckpt;
    ckpt.step = detail::read_pod<uint64_t>(in, path);
    const auto config_len = detail::read_pod<uint32_t>(in, path);
    ckpt.config_json.resize(config_len);
    in.read(ckpt.config_json.data(), config_len);
    require<DataError>(in.good(), path, ": truncated config echo");
    const auto n_records = detail::read_pod<uint32_t>(in, path);
    for (uint32_t i = 0; i < n_records; ++i) {
        const auto name_len = detail::read_pod<uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        require<DataError>(in.good(), path, ": truncated record name");
        CheckpointRecord rec;
        rec.dtype = detail::read_pod<uint8_t>(in, path);
        const auto ndim = detail::read_pod<uint32_t>(in, path);
        for (uint32_t d = 0; d < ndim; ++d)
            rec.shape.push_back(detail::read_pod<int64_t>(in, path));
        const auto bytes = detail::read_pod<uint64_t>(in, path);
        rec.payload.resize(bytes);
        in.read(reinterpret_cast<char*>(rec.payload.data()), static_cast<std::streamsize>(bytes));
        require<DataError>(in.good(), path, ": truncated record payload for '", name, "'");
        ckpt.records.emplace(std::move(name), std::move(rec));
    }
    return ckpt;
}

template <typename T>
constexpr uint8_t dtype_code() {
    static_assert(std::is_same_v<T, double> || std::is_same_v<T, float>,
                  "checkpoints hold f64 or f32 data");
    return std::is_same_v<T, double> ? 0 : 1;
}

template <typename T>
CheckpointRecord make_record(const Shape& shape, std::span<const T> values) {
    CheckpointRecord rec;
    rec.dtype = dtype_code<T>();
    rec.shape = shape;
    rec.payload.resize(values.size() * sizeof(T));
    std::memcpy(rec.payload.data(), values.data(), rec.payload.size());
    return rec;
}

template <typename T>
void record_into(const CheckpointFile& ckpt, const std::string& name, const Shape& want_shape,
                 std::span<T> dst) {
    auto it = ckpt.records.find(name);
    require<DataError>(it != ckpt.records.end(), "checkpoint is missing record '", name, "'");
    const CheckpointRecord& rec = it->second;
    require<DataError>(rec.dtype == dtype_code<T>(), "record '", name,
                       "' has dtype code ", int(rec.dtype), ", expected ", int(dtype_code<T>()));
    require<DataError>(rec.shape == want_shape, "record '", name, "' has shape ",
                       shape_str(rec.shape), ", expected ", shape_str(want_shape));
    require<DataError>(rec.payload.size() == dst.size() * sizeof(T), "record '", name,
                       "' payload size mismatch");
    std::memcpy(dst.data(), rec.payload.data(), rec.payload.size());
}

}  // namespace inpaint
