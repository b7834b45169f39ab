#include "cryosamu/volume.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

namespace cryosamu {

DensityMap regrid(const DensityMap& src, const Dims3& dims, const Vec3& voxel_size,
                  const Vec3& origin) {
    src.validate();
    for (int i = 0; i < 3; ++i) {
        if (dims[i] < 1) throw numeric_error("regrid target has a zero-extent axis");
        if (!(voxel_size[i] > 0)) throw config_error("regrid voxel size must be positive");
    }

    DensityMap out(dims);
    out.voxel_size = voxel_size;
    out.origin = origin;

    const int64_t nx = src.dims[0], ny = src.dims[1], nz = src.dims[2];
    auto sample = [&](int64_t x, int64_t y, int64_t z) -> double {
        if (x < 0 || x >= nx || y < 0 || y >= ny || z < 0 || z >= nz) return 0.0;
        return src.data[src.index(x, y, z)];
    };

#pragma omp parallel for schedule(static)
    for (int64_t k = 0; k < dims[2]; ++k) {
        const double fz = (origin.z + k * voxel_size.z - src.origin.z) / src.voxel_size.z;
        const int64_t z0 = int64_t(std::floor(fz));
        const double tz = fz - double(z0);
        for (int64_t j = 0; j < dims[1]; ++j) {
            const double fy = (origin.y + j * voxel_size.y - src.origin.y) / src.voxel_size.y;
            const int64_t y0 = int64_t(std::floor(fy));
            const double ty = fy - double(y0);
            for (int64_t i = 0; i < dims[0]; ++i) {
                const double fx =
                    (origin.x + i * voxel_size.x - src.origin.x) / src.voxel_size.x;
                const int64_t x0 = int64_t(std::floor(fx));
                const double tx = fx - double(x0);
                double v = 0.0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wgt = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) *
                                               (dz ? tz : 1 - tz);
                            if (wgt != 0.0) v += wgt * sample(x0 + dx, y0 + dy, z0 + dz);
                        }
                out.data[out.index(i, j, k)] = float(v);
            }
        }
    }
    return out;
}

DensityMap resample(const DensityMap& map, double target) {
    map.validate();
    if (!(target > 0)) throw config_error("resample target must be positive");
    Dims3 out_dims;
    for (int i = 0; i < 3; ++i) {
        out_dims[i] = int64_t(std::ceil(double(map.dims[i]) * map.voxel_size[i] / target));
        if (out_dims[i] < 1) throw numeric_error("resample produced a zero-extent axis");
    }
    return regrid(map, out_dims, {target, target, target}, map.origin);
}

NormalizeResult normalize(const DensityMap& map, double percentile, bool nonzero_only) {
    map.validate();
    if (!(percentile > 0) || percentile > 100) throw config_error("percentile must be in (0,100]");

    std::vector<float> vals;
    if (nonzero_only) {
        for (float v : map.data)
            if (v > 0.0f) vals.push_back(v);
        if (vals.empty()) throw numeric_error("normalize: no positive voxels");
    } else {
        vals = map.data;
    }
    std::sort(vals.begin(), vals.end());

    const double rank = percentile / 100.0 * double(vals.size() - 1);
    const size_t lo = size_t(std::floor(rank));
    const size_t hi = std::min(lo + 1, vals.size() - 1);
    const double frac = rank - double(lo);
    const double scale = double(vals[lo]) + frac * (double(vals[hi]) - double(vals[lo]));

    if (!(scale > 0))
        throw numeric_error("normalize: percentile scale " + std::to_string(scale) +
                            " is not positive");

    NormalizeResult res;
    res.scale = scale;
    res.map = map;
    for (float& v : res.map.data)
        v = float(std::clamp(double(v) / scale, 0.0, 1.0));
    return res;
}

TilePlan make_plan(const Dims3& dims, int64_t cube_size, int64_t core_size, int64_t pad) {
    for (int i = 0; i < 3; ++i)
        if (dims[i] < 1) throw config_error("plan dims must be >= 1");
    if (core_size < 1 || core_size > cube_size || (cube_size - core_size) % 2 != 0)
        throw config_error("core must be >= 1 and fit centered in cube");
    if (pad < (cube_size - core_size) / 2)
        throw config_error("pad too small for the cube rim");

    TilePlan plan;
    plan.original_dims = dims;
    plan.cube_size = cube_size;
    plan.core_size = core_size;
    plan.stride = core_size;
    plan.pad = pad;
    for (int i = 0; i < 3; ++i) plan.padded_dims[i] = dims[i] + 2 * pad;

    // Per-axis core starts on the stride lattice; the final core is clamped
    // inward so it covers the tail.
    std::array<std::vector<int64_t>, 3> starts;
    for (int i = 0; i < 3; ++i) {
        const int64_t n = (dims[i] + core_size - 1) / core_size;
        for (int64_t t = 0; t < n; ++t) {
            int64_t s = t * core_size;
            if (s + core_size > dims[i]) s = std::max<int64_t>(0, dims[i] - core_size);
            starts[i].push_back(s);
        }
    }

    const int64_t rim = (cube_size - core_size) / 2;
    for (int64_t sz : starts[2])
        for (int64_t sy : starts[1])
            for (int64_t sx : starts[0])
                plan.cube_origins.push_back({sx + pad - rim, sy + pad - rim, sz + pad - rim});
    return plan;
}

CubeBatch partition(const DensityMap& map, const TilePlan& plan) {
    if (map.dims != plan.original_dims)
        throw config_error("tile plan was built for different dims");

    CubeBatch batch;
    const int64_t cs = plan.cube_size;
    batch.cubes.assign(size_t(plan.cube_count()), std::vector<float>(size_t(cs * cs * cs), 0.0f));
    batch.indices.resize(size_t(plan.cube_count()));

#pragma omp parallel for schedule(dynamic, 1)
    for (int64_t c = 0; c < plan.cube_count(); ++c) {
        batch.indices[c] = c;
        const Dims3 o = plan.cube_origins[c];
        std::vector<float>& cube = batch.cubes[c];
        for (int64_t z = 0; z < cs; ++z) {
            const int64_t mz = o[2] + z - plan.pad;
            if (mz < 0 || mz >= map.dims[2]) continue;
            for (int64_t y = 0; y < cs; ++y) {
                const int64_t my = o[1] + y - plan.pad;
                if (my < 0 || my >= map.dims[1]) continue;
                const int64_t x0 = std::max<int64_t>(0, plan.pad - o[0]);
                const int64_t x1 = std::min(cs, map.dims[0] + plan.pad - o[0]);
                for (int64_t x = x0; x < x1; ++x)
                    cube[(z * cs + y) * cs + x] = map.data[map.index(o[0] + x - plan.pad, my, mz)];
            }
        }
    }
    return batch;
}

DensityMap stitch(const CubeBatch& batch, const TilePlan& plan) {
    if (int64_t(batch.cubes.size()) != plan.cube_count())
        throw config_error("stitch: batch has " + std::to_string(batch.cubes.size()) +
                           " cubes, plan expects " + std::to_string(plan.cube_count()));
    std::vector<char> seen(size_t(plan.cube_count()), 0);
    for (size_t i = 0; i < batch.cubes.size(); ++i) {
        const int64_t idx = batch.indices[i];
        if (idx < 0 || idx >= plan.cube_count())
            throw config_error("stitch: cube index out of range");
        if (int64_t(batch.cubes[i].size()) !=
            plan.cube_size * plan.cube_size * plan.cube_size)
            throw config_error("stitch: cube has wrong size");
        seen[size_t(idx)] = 1;
    }
    for (int64_t c = 0; c < plan.cube_count(); ++c)
        if (!seen[size_t(c)])
            throw config_error("stitch: missing cube " + std::to_string(c));

    // Order cubes by plan index so tail overlaps resolve last-writer-wins
    // in origin order.
    std::vector<const std::vector<float>*> by_plan(size_t(plan.cube_count()), nullptr);
    for (size_t i = 0; i < batch.cubes.size(); ++i)
        by_plan[size_t(batch.indices[i])] = &batch.cubes[i];

    DensityMap out(plan.original_dims);
    const int64_t cs = plan.cube_size;
    const int64_t rim = plan.rim();
    for (int64_t c = 0; c < plan.cube_count(); ++c) {
        const Dims3 o = plan.cube_origins[c];
        const std::vector<float>& cube = *by_plan[size_t(c)];
#pragma omp parallel for schedule(static)
        for (int64_t z = rim; z < rim + plan.core_size; ++z) {
            const int64_t mz = o[2] + z - plan.pad;
            if (mz < 0 || mz >= out.dims[2]) continue;
            for (int64_t y = rim; y < rim + plan.core_size; ++y) {
                const int64_t my = o[1] + y - plan.pad;
                if (my < 0 || my >= out.dims[1]) continue;
                for (int64_t x = rim; x < rim + plan.core_size; ++x) {
                    const int64_t mx = o[0] + x - plan.pad;
                    if (mx < 0 || mx >= out.dims[0]) continue;
                    out.data[out.index(mx, my, mz)] = cube[(z * cs + y) * cs + x];
                }
            }
        }
    }
    return out;
}

void AugmentConfig::validate() const {
    if (noise_sigma_min < 0 || noise_sigma_max < noise_sigma_min)
        throw config_error("augment: invalid noise sigma range");
    if (blur_sigma_min < 0 || blur_sigma_max < blur_sigma_min)
        throw config_error("augment: invalid blur sigma range");
    if (aniso_min < 1.0 || aniso_max < aniso_min)
        throw config_error("augment: anisotropy factors must be >= 1 and ordered");
}

void gaussian_blur_inplace(std::vector<float>& vol, const Dims3& dims, double sigma) {
    if (sigma <= 0) return;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(size_t(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[size_t(i + radius)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
        ksum += kernel[size_t(i + radius)];
    }
    for (double& k : kernel) k /= ksum;

    auto reflect = [](int64_t i, int64_t n) -> int64_t {
        if (n == 1) return 0;
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - i - 1;
        }
        return i;
    };

    const int64_t nx = dims[0], ny = dims[1], nz = dims[2];
    std::vector<float> tmp(vol.size());
    const int64_t strides[3] = {1, nx, nx * ny};
    const int64_t extents[3] = {nx, ny, nz};

    for (int axis = 0; axis < 3; ++axis) {
        const int64_t n = extents[axis];
        const int64_t stride = strides[axis];
        const int64_t axis_u = (axis + 1) % 3, axis_v = (axis + 2) % 3;
#pragma omp parallel for schedule(static)
        for (int64_t u = 0; u < extents[axis_u]; ++u) {
            for (int64_t v = 0; v < extents[axis_v]; ++v) {
                const int64_t base = u * strides[axis_u] + v * strides[axis_v];
                for (int64_t i = 0; i < n; ++i) {
                    double acc = 0.0;
                    for (int t = -radius; t <= radius; ++t)
                        acc += kernel[size_t(t + radius)] *
                               vol[size_t(base + reflect(i + t, n) * stride)];
                    tmp[size_t(base + i * stride)] = float(acc);
                }
            }
        }
        vol.swap(tmp);
    }
}

std::vector<float> augment(const std::vector<float>& cube, int64_t cube_size, uint64_t rng_seed,
                           const AugmentConfig& cfg) {
    cfg.validate();
    if (int64_t(cube.size()) != cube_size * cube_size * cube_size)
        throw config_error("augment: cube size mismatch");

    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double noise_sigma =
        cfg.noise_sigma_min + (cfg.noise_sigma_max - cfg.noise_sigma_min) * uni(rng);
    const double blur_sigma =
        cfg.blur_sigma_min + (cfg.blur_sigma_max - cfg.blur_sigma_min) * uni(rng);
    const double aniso = cfg.aniso_min + (cfg.aniso_max - cfg.aniso_min) * uni(rng);
    const int aniso_axis = int(rng() % 3);

    std::vector<float> out = cube;
    const Dims3 dims = {cube_size, cube_size, cube_size};

    if (noise_sigma > 0) {
        std::normal_distribution<double> gauss(0.0, noise_sigma);
        for (float& v : out) v = float(v + gauss(rng));
    }

    if (aniso > 1.0) {
        // Downsample one axis by the factor, then trilinear upsample back.
        const int64_t n = cube_size;
        const int64_t n_low = std::max<int64_t>(2, int64_t(std::floor(double(n) / aniso)));
        const int64_t strides[3] = {1, n, n * n};
        const int64_t s = strides[aniso_axis];
        const int axis_u = (aniso_axis + 1) % 3, axis_v = (aniso_axis + 2) % 3;
        const double down_step = double(n - 1) / double(n_low - 1);
        std::vector<float> line_low(static_cast<size_t>(n_low), 0.0f);
        for (int64_t u = 0; u < n; ++u) {
            for (int64_t v = 0; v < n; ++v) {
                const int64_t base = u * strides[axis_u] + v * strides[axis_v];
                for (int64_t i = 0; i < n_low; ++i) {
                    const double f = i * down_step;
                    const int64_t i0 = std::min<int64_t>(int64_t(f), n - 2);
                    const double t = f - double(i0);
                    line_low[size_t(i)] = float((1 - t) * out[size_t(base + i0 * s)] +
                                                t * out[size_t(base + (i0 + 1) * s)]);
                }
                const double up_step = double(n_low - 1) / double(n - 1);
                for (int64_t i = 0; i < n; ++i) {
                    const double f = i * up_step;
                    const int64_t i0 = std::min<int64_t>(int64_t(f), n_low - 2);
                    const double t = f - double(i0);
                    out[size_t(base + i * s)] =
                        float((1 - t) * line_low[size_t(i0)] + t * line_low[size_t(i0 + 1)]);
                }
            }
        }
    }

    if (blur_sigma > 0) gaussian_blur_inplace(out, dims, blur_sigma);
    return out;
}

std::string TilePlan::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["original_dims"] = original_dims;
    j["padded_dims"] = padded_dims;
    j["cube_size"] = cube_size;
    j["core_size"] = core_size;
    j["stride"] = stride;
    j["pad"] = pad;
    auto& origins = j["cube_origins"] = nlohmann::json::array();
    for (const Dims3& o : cube_origins) origins.push_back(o);
    return j.dump(2);
}

TilePlan TilePlan::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("invalid tile-plan JSON: ") + e.what());
    }
    TilePlan plan;
    try {
        plan.original_dims = j.at("original_dims").get<Dims3>();
        plan.padded_dims = j.at("padded_dims").get<Dims3>();
        plan.cube_size = j.at("cube_size").get<int64_t>();
        plan.core_size = j.at("core_size").get<int64_t>();
        plan.stride = j.at("stride").get<int64_t>();
        plan.pad = j.at("pad").get<int64_t>();
        for (const auto& o : j.at("cube_origins")) plan.cube_origins.push_back(o.get<Dims3>());
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("tile-plan JSON missing fields: ") + e.what());
    }
    return plan;
}

}  // namespace cryosamu
