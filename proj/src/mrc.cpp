#include "cryosamu/mrc.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>

namespace cryosamu {

namespace {

constexpr size_t kHeaderBytes = 1024;

static_assert(std::endian::native == std::endian::little,
              "serialization below assumes a little-endian host");

int32_t get_i32(const unsigned char* h, int word) {
    int32_t v;
    std::memcpy(&v, h + 4 * (word - 1), 4);
    return v;
}

float get_f32(const unsigned char* h, int word) {
    float v;
    std::memcpy(&v, h + 4 * (word - 1), 4);
    return v;
}

void set_i32(unsigned char* h, int word, int32_t v) { std::memcpy(h + 4 * (word - 1), &v, 4); }
void set_f32(unsigned char* h, int word, float v) { std::memcpy(h + 4 * (word - 1), &v, 4); }

size_t mode_elem_size(int32_t mode) {
    switch (mode) {
        case 0: return 1;
        case 1: return 2;
        case 2: return 4;
        case 6: return 2;
        default: return 0;
    }
}

MrcHeader parse_header(const unsigned char* h, const std::string& path) {
    MrcHeader hdr;
    for (int i = 0; i < 3; ++i) hdr.n[i] = get_i32(h, 1 + i);
    hdr.mode = get_i32(h, 4);
    for (int i = 0; i < 3; ++i) hdr.nstart[i] = get_i32(h, 5 + i);
    for (int i = 0; i < 3; ++i) hdr.m[i] = get_i32(h, 8 + i);
    for (int i = 0; i < 3; ++i) hdr.cell[i] = get_f32(h, 11 + i);
    for (int i = 0; i < 3; ++i) hdr.map_axes[i] = get_i32(h, 17 + i);
    hdr.dmin = get_f32(h, 20);
    hdr.dmax = get_f32(h, 21);
    hdr.dmean = get_f32(h, 22);
    hdr.nsymbt = get_i32(h, 24);
    for (int i = 0; i < 3; ++i) hdr.origin[i] = get_f32(h, 50 + i);
    hdr.rms = get_f32(h, 55);

    // Machine stamp lives at bytes 212-215 (word 54). 0x11 first byte means
    // the file was written big-endian; zero-filled stamps are treated as
    // little-endian.
    if (h[212] == 0x11)
        throw io_error(path + ": big-endian MRC files are not supported");

    if (mode_elem_size(hdr.mode) == 0)
        throw io_error(path + ": unsupported MRC mode " + std::to_string(hdr.mode) +
                       " (expected 0, 1, 2 or 6)");

    bool seen[3] = {false, false, false};
    for (int i = 0; i < 3; ++i) {
        int32_t a = hdr.map_axes[i];
        if (a < 1 || a > 3 || seen[a - 1])
            throw io_error(path + ": mapc/mapr/maps = (" + std::to_string(hdr.map_axes[0]) +
                           "," + std::to_string(hdr.map_axes[1]) + "," +
                           std::to_string(hdr.map_axes[2]) + ") is not a permutation of 1,2,3");
        seen[a - 1] = true;
    }
    for (int i = 0; i < 3; ++i) {
        if (hdr.n[i] < 1)
            throw io_error(path + ": non-positive dimension " + std::to_string(hdr.n[i]));
        if (hdr.nsymbt < 0)
            throw io_error(path + ": negative extended header size");
    }
    return hdr;
}

}  // namespace

MrcHeader read_mrc_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    unsigned char h[kHeaderBytes];
    in.read(reinterpret_cast<char*>(h), kHeaderBytes);
    if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes))
        throw io_error(path + ": truncated header, file ends at byte " +
                       std::to_string(in.gcount()) + " of " + std::to_string(kHeaderBytes));
    return parse_header(h, path);
}

DensityMap read_mrc(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    in.seekg(0, std::ios::end);
    const int64_t file_size = in.tellg();
    in.seekg(0);

    if (file_size < static_cast<int64_t>(kHeaderBytes))
        throw io_error(path + ": truncated header, file ends at byte " +
                       std::to_string(file_size) + " of " + std::to_string(kHeaderBytes));

    unsigned char h[kHeaderBytes];
    in.read(reinterpret_cast<char*>(h), kHeaderBytes);
    MrcHeader hdr = parse_header(h, path);

    const size_t elem = mode_elem_size(hdr.mode);
    const int64_t count = int64_t(hdr.n[0]) * hdr.n[1] * hdr.n[2];
    const int64_t data_offset = kHeaderBytes + hdr.nsymbt;
    const int64_t needed = data_offset + count * int64_t(elem);
    if (file_size < needed)
        throw io_error(path + ": truncated data section, need " + std::to_string(needed) +
                       " bytes but file ends at byte " + std::to_string(file_size));

    std::vector<unsigned char> raw(count * elem);
    in.seekg(data_offset);
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (!in) throw io_error(path + ": read failed at byte " + std::to_string(data_offset));

    std::vector<float> file_values(count);
    switch (hdr.mode) {
        case 0: {
            const auto* p = reinterpret_cast<const int8_t*>(raw.data());
            for (int64_t i = 0; i < count; ++i) file_values[i] = float(p[i]);
            break;
        }
        case 1: {
            const auto* p = reinterpret_cast<const int16_t*>(raw.data());
            for (int64_t i = 0; i < count; ++i) file_values[i] = float(p[i]);
            break;
        }
        case 2:
            std::memcpy(file_values.data(), raw.data(), raw.size());
            break;
        case 6: {
            const auto* p = reinterpret_cast<const uint16_t*>(raw.data());
            for (int64_t i = 0; i < count; ++i) file_values[i] = float(p[i]);
            break;
        }
    }
    for (int64_t i = 0; i < count; ++i) {
        if (!std::isfinite(file_values[i]))
            throw io_error(path + ": non-finite density value at byte offset " +
                           std::to_string(data_offset + i * int64_t(elem)));
    }

    // Normalize storage to logical order (X fastest). map_axes[i] names the
    // logical axis of file axis i, with file axis 0 the fastest.
    const int lc = hdr.map_axes[0] - 1, lr = hdr.map_axes[1] - 1, ls = hdr.map_axes[2] - 1;
    DensityMap map;
    map.dims[lc] = hdr.n[0];
    map.dims[lr] = hdr.n[1];
    map.dims[ls] = hdr.n[2];
    map.axis_order = {hdr.map_axes[0], hdr.map_axes[1], hdr.map_axes[2]};

    map.data.resize(count);
    const int64_t nc = hdr.n[0], nr = hdr.n[1], ns = hdr.n[2];
    const int64_t lstride[3] = {1, map.dims[0], map.dims[0] * map.dims[1]};
    int64_t src = 0;
    for (int64_t s = 0; s < ns; ++s)
        for (int64_t r = 0; r < nr; ++r)
            for (int64_t c = 0; c < nc; ++c, ++src)
                map.data[c * lstride[lc] + r * lstride[lr] + s * lstride[ls]] = file_values[src];

    for (int i = 0; i < 3; ++i) {
        int64_t samples = hdr.m[i] > 0 ? hdr.m[i] : map.dims[i];
        if (!(hdr.cell[i] > 0.0f) || !std::isfinite(hdr.cell[i]))
            throw io_error(path + ": non-positive cell dimension on axis " + std::to_string(i));
        double v = double(hdr.cell[i]) / double(samples);
        if (i == 0) map.voxel_size.x = v;
        if (i == 1) map.voxel_size.y = v;
        if (i == 2) map.voxel_size.z = v;
    }

    // Origin: honor the explicit origin record; when it is zero, fall back
    // to start-index * voxel size. Flag a conflict if both are set.
    int32_t lstart[3];
    lstart[lc] = hdr.nstart[0];
    lstart[lr] = hdr.nstart[1];
    lstart[ls] = hdr.nstart[2];
    const bool origin_set = hdr.origin[0] != 0.0f || hdr.origin[1] != 0.0f || hdr.origin[2] != 0.0f;
    const bool start_set = lstart[0] != 0 || lstart[1] != 0 || lstart[2] != 0;
    if (origin_set) {
        map.origin = {hdr.origin[0], hdr.origin[1], hdr.origin[2]};
        if (start_set && warnings)
            warnings->push_back(path + ": both origin record and start indices set; using origin");
    } else if (start_set) {
        map.origin = {lstart[0] * map.voxel_size.x, lstart[1] * map.voxel_size.y,
                      lstart[2] * map.voxel_size.z};
    }

    map.validate();
    return map;
}

void write_mrc(const DensityMap& map, const std::string& path) {
    map.validate();

    unsigned char h[kHeaderBytes];
    std::memset(h, 0, sizeof(h));
    set_i32(h, 1, int32_t(map.dims[0]));
    set_i32(h, 2, int32_t(map.dims[1]));
    set_i32(h, 3, int32_t(map.dims[2]));
    set_i32(h, 4, 2);  // mode 2, float32
    for (int i = 0; i < 3; ++i) set_i32(h, 8 + i, int32_t(map.dims[i]));
    set_f32(h, 11, float(map.voxel_size.x * double(map.dims[0])));
    set_f32(h, 12, float(map.voxel_size.y * double(map.dims[1])));
    set_f32(h, 13, float(map.voxel_size.z * double(map.dims[2])));
    set_i32(h, 17, 1);
    set_i32(h, 18, 2);
    set_i32(h, 19, 3);

    float dmin = std::numeric_limits<float>::max();
    float dmax = std::numeric_limits<float>::lowest();
    double sum = 0.0;
    for (float v : map.data) {
        dmin = std::min(dmin, v);
        dmax = std::max(dmax, v);
        sum += v;
    }
    set_f32(h, 20, dmin);
    set_f32(h, 21, dmax);
    set_f32(h, 22, float(sum / double(map.data.size())));
    set_f32(h, 50, float(map.origin.x));
    set_f32(h, 51, float(map.origin.y));
    set_f32(h, 52, float(map.origin.z));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(h), kHeaderBytes);
    out.write(reinterpret_cast<const char*>(map.data.data()),
              std::streamsize(map.data.size() * sizeof(float)));
    if (!out) throw io_error("write failed for " + path);
}

}  // namespace cryosamu
