#ifndef CRYOSAMU_DENSITY_MAP_HPP
#define CRYOSAMU_DENSITY_MAP_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "cryosamu/common.hpp"

namespace cryosamu {

/// 3D voxel grid with physical metadata. Data is stored row-major in
/// logical (Z,Y,X) order, X fastest, regardless of how a file stored it.
struct DensityMap {
    std::vector<float> data;
    Dims3 dims = {0, 0, 0};              // (nx, ny, nz)
    Vec3 voxel_size = {1.0, 1.0, 1.0};   // Angstrom per voxel
    Vec3 origin = {0.0, 0.0, 0.0};       // Angstrom, position of voxel (0,0,0)
    std::array<int, 3> axis_order = {1, 2, 3};  // file's mapc/mapr/maps, kept as metadata

    DensityMap() = default;
    DensityMap(Dims3 d, float fill = 0.0f)
        : data(static_cast<size_t>(volume_of(d)), fill), dims(d) {}

    int64_t nx() const { return dims[0]; }
    int64_t ny() const { return dims[1]; }
    int64_t nz() const { return dims[2]; }
    int64_t size() const { return volume_of(dims); }

    int64_t index(int64_t x, int64_t y, int64_t z) const {
        return (z * dims[1] + y) * dims[0] + x;
    }
    float at(int64_t x, int64_t y, int64_t z) const { return data[index(x, y, z)]; }
    float& at(int64_t x, int64_t y, int64_t z) { return data[index(x, y, z)]; }

    bool in_bounds(int64_t x, int64_t y, int64_t z) const {
        return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
    }

    /// Physical position of grid node (x,y,z).
    Vec3 position(int64_t x, int64_t y, int64_t z) const {
        return {origin.x + x * voxel_size.x,
                origin.y + y * voxel_size.y,
                origin.z + z * voxel_size.z};
    }

    double voxel_volume() const { return voxel_size.x * voxel_size.y * voxel_size.z; }

    /// Throws if dims/data are inconsistent, voxel size non-positive, or
    /// any stored value is non-finite.
    void validate() const;
};

}  // namespace cryosamu

#endif
