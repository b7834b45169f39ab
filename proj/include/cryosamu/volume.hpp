#ifndef CRYOSAMU_VOLUME_HPP
#define CRYOSAMU_VOLUME_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cryosamu/density_map.hpp"

namespace cryosamu {

/// Deterministic mapping between a volume and its cube decomposition.
/// Cube origins index into the zero-padded volume (pad voxels per side);
/// each cube's central core tiles the original volume, with tail cubes
/// clamped inward and overlaps resolved last-writer-wins in origin order.
struct TilePlan {
    Dims3 original_dims = {0, 0, 0};
    Dims3 padded_dims = {0, 0, 0};
    int64_t cube_size = 64;
    int64_t core_size = 50;
    int64_t stride = 50;
    int64_t pad = 64;
    std::vector<Dims3> cube_origins;  // offsets into the padded volume

    int64_t cube_count() const { return int64_t(cube_origins.size()); }
    /// Rim width between cube edge and core: (cube_size - core_size)/2.
    int64_t rim() const { return (cube_size - core_size) / 2; }

    std::string to_json() const;
    static TilePlan from_json(const std::string& text);
};

struct CubeBatch {
    std::vector<std::vector<float>> cubes;  // each cube_size^3, X fastest
    std::vector<int64_t> indices;           // into plan.cube_origins
};

/// Trilinear resample onto an axis-aligned grid with `target` A/voxel
/// sharing the source origin. Out-of-range samples read as zero.
DensityMap resample(const DensityMap& map, double target = 1.0);

/// Trilinear sampling of `src` onto an arbitrary axis-aligned grid.
/// Out-of-range samples read as zero.
DensityMap regrid(const DensityMap& src, const Dims3& dims, const Vec3& voxel_size,
                  const Vec3& origin);

struct NormalizeResult {
    DensityMap map;    // values clamped to [0, 1]
    double scale = 0;  // 99.9th percentile used as divisor
};

/// Scale by the 99.9th percentile (linear interpolation between order
/// statistics) and clamp to [0,1]. nonzero_only restricts the percentile
/// to strictly positive voxels. Errors when the scale is non-positive.
NormalizeResult normalize(const DensityMap& map, double percentile = 99.9,
                          bool nonzero_only = false);

TilePlan make_plan(const Dims3& dims, int64_t cube_size = 64, int64_t core_size = 50,
                   int64_t pad = 64);

/// Copy cubes out of the (conceptually) zero-padded volume.
CubeBatch partition(const DensityMap& map, const TilePlan& plan);

/// Reassemble a volume of the original dims from cube cores. Requires a
/// complete batch.
DensityMap stitch(const CubeBatch& cubes, const TilePlan& plan);

struct AugmentConfig {
    double noise_sigma_min = 0.0, noise_sigma_max = 0.0;  // additive Gaussian
    double blur_sigma_min = 0.0, blur_sigma_max = 0.0;    // separable Gaussian, voxels
    double aniso_min = 1.0, aniso_max = 1.0;              // per-axis downsample factor

    void validate() const;
};

/// Seeded augmentation: Gaussian noise, one-axis anisotropy (downsample then
/// trilinear upsample), Gaussian blur with reflective borders. A
/// zero-strength config is the identity.
std::vector<float> augment(const std::vector<float>& cube, int64_t cube_size, uint64_t rng_seed,
                           const AugmentConfig& cfg);

/// Separable Gaussian blur with reflective borders, used by augment and by
/// the toy-training data builder.
void gaussian_blur_inplace(std::vector<float>& vol, const Dims3& dims, double sigma);

}  // namespace cryosamu

#endif
