#ifndef CRYOSAMU_COMMON_HPP
#define CRYOSAMU_COMMON_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cryosamu {

// Error categories map to CLI exit codes: io=2, config=3, numeric=4, internal=1.
enum class ErrorCategory { io, config, numeric, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& msg)
        : std::runtime_error(msg), category_(cat) {}
    ErrorCategory category() const { return category_; }

private:
    ErrorCategory category_;
};

inline Error io_error(const std::string& msg) { return Error(ErrorCategory::io, msg); }
inline Error config_error(const std::string& msg) { return Error(ErrorCategory::config, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorCategory::numeric, msg); }

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm2() const { return x * x + y * y + z * z; }
    double norm() const { return std::sqrt(norm2()); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

using Dims3 = std::array<int64_t, 3>;  // (nx, ny, nz), X fastest in memory

inline int64_t volume_of(const Dims3& d) { return d[0] * d[1] * d[2]; }

// FNV-1a 64-bit, used for config hashes and input checksums in logs.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace cryosamu

#endif
