#ifndef CRYOSAMU_MRC_HPP
#define CRYOSAMU_MRC_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cryosamu/density_map.hpp"

namespace cryosamu {

// MRC-2014, little-endian. Word numbers are 1-based 4-byte words into the
// 1024-byte header: 1-3 dims, 4 mode, 5-7 start, 8-10 sampling, 11-13 cell,
// 17-19 axis codes, 20-22 dmin/dmax/dmean, 50-52 origin. Fields outside
// this set are written as zero.
struct MrcHeader {
    std::array<int32_t, 3> n = {0, 0, 0};        // dims in file storage order
    int32_t mode = 2;                            // 0=int8, 1=int16, 2=float32, 6=uint16
    std::array<int32_t, 3> nstart = {0, 0, 0};   // start indices, file order
    std::array<int32_t, 3> m = {0, 0, 0};        // sampling grid, crystal axis order
    std::array<float, 3> cell = {0, 0, 0};       // cell dims in Angstrom, crystal axis order
    std::array<int32_t, 3> map_axes = {1, 2, 3}; // mapc, mapr, maps
    float dmin = 0, dmax = 0, dmean = 0;
    int32_t nsymbt = 0;                          // extended header bytes, skipped on read
    std::array<float, 3> origin = {0, 0, 0};
    float rms = 0;
};

/// Parse an MRC-2014 file. Axis order is normalized to logical X-fastest;
/// voxel_size = cell / sampling per axis. Non-finite densities, truncated
/// files, unsupported modes, non-permutation axis codes and big-endian
/// files are hard errors. Warnings (origin/start conflicts) are appended
/// to *warnings when given.
DensityMap read_mrc(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Read just the 1024-byte header (validates the same way as read_mrc).
MrcHeader read_mrc_header(const std::string& path);

/// Write a mode-2 little-endian MRC-2014 file. Round-trips data bit-exactly.
void write_mrc(const DensityMap& map, const std::string& path);

}  // namespace cryosamu

#endif
