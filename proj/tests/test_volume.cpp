#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cryosamu/volume.hpp"
#include "testutil.hpp"

using namespace cryosamu;

TEST_CASE("resample") {
    SUBCASE("identity at matching spacing") {
        DensityMap m = testutil::random_map({6, 5, 4}, 3);
        DensityMap r = resample(m, 1.0);
        REQUIRE(r.dims == m.dims);
        for (size_t i = 0; i < m.data.size(); ++i)
            CHECK(r.data[i] == doctest::Approx(m.data[i]).epsilon(1e-6));
    }
    SUBCASE("constant map at 0.5 A/voxel halves dims, value unchanged") {
        DensityMap m({8, 8, 8}, 2.5f);
        m.voxel_size = {0.5, 0.5, 0.5};
        DensityMap r = resample(m, 1.0);
        CHECK(r.dims == Dims3{4, 4, 4});
        for (float v : r.data) CHECK(v == doctest::Approx(2.5).epsilon(1e-6));
    }
    SUBCASE("linear ramp along X matches the analytic ramp") {
        DensityMap m({10, 3, 3});
        m.voxel_size = {2.0, 1.0, 1.0};
        for (int64_t z = 0; z < 3; ++z)
            for (int64_t y = 0; y < 3; ++y)
                for (int64_t x = 0; x < 10; ++x) m.at(x, y, z) = float(3.0 * double(x));
        DensityMap r = resample(m, 1.0);
        CHECK(r.dims[0] == 20);
        // Sample i sits at source coordinate i/2 voxels -> value 1.5 i, valid
        // while both interpolation neighbors exist (i/2 <= 9).
        for (int64_t i = 0; i <= 18; ++i)
            CHECK(r.at(i, 1, 1) == doctest::Approx(1.5 * double(i)).epsilon(1e-5));
    }
    SUBCASE("anisotropic voxels resample axis by axis") {
        DensityMap m({4, 6, 2}, 1.0f);
        m.voxel_size = {2.0, 1.0, 3.0};
        DensityMap r = resample(m, 1.0);
        CHECK(r.dims == Dims3{8, 6, 6});
    }
    SUBCASE("invalid target rejected") {
        DensityMap m({2, 2, 2}, 1.0f);
        CHECK_THROWS_AS(resample(m, 0.0), Error);
    }
}

TEST_CASE("regrid") {
    SUBCASE("round trip through a finer grid recovers a smooth field") {
        DensityMap m({8, 8, 8});
        m.voxel_size = {2.0, 2.0, 2.0};
        m.origin = {3.0, -1.0, 0.0};
        for (int64_t z = 0; z < 8; ++z)
            for (int64_t y = 0; y < 8; ++y)
                for (int64_t x = 0; x < 8; ++x) {
                    const Vec3 p = m.position(x, y, z);
                    m.at(x, y, z) = float(0.5 * p.x - 0.25 * p.y + 0.125 * p.z);
                }
        DensityMap fine = resample(m, 1.0);
        DensityMap back = regrid(fine, m.dims, m.voxel_size, m.origin);
        // Trilinear is exact on affine fields wherever support exists.
        for (int64_t z = 0; z < 7; ++z)
            for (int64_t y = 0; y < 7; ++y)
                for (int64_t x = 0; x < 7; ++x)
                    CHECK(back.at(x, y, z) == doctest::Approx(m.at(x, y, z)).epsilon(1e-5));
        CHECK(back.voxel_size.x == doctest::Approx(2.0));
        CHECK(back.origin.x == doctest::Approx(3.0));
    }
    SUBCASE("samples outside the source read as zero") {
        DensityMap m({2, 2, 2}, 5.0f);
        DensityMap far = regrid(m, {2, 2, 2}, {1, 1, 1}, {100, 100, 100});
        for (float v : far.data) CHECK(v == 0.0f);
    }
}

TEST_CASE("normalize") {
    SUBCASE("1..1000 map scales by the interpolated 99.9th percentile") {
        DensityMap m({10, 10, 10});
        for (int64_t i = 0; i < 1000; ++i) m.data[size_t(i)] = float(i + 1);
        // Independent order-statistics oracle.
        std::vector<float> sorted = m.data;
        std::sort(sorted.begin(), sorted.end());
        const double rank = 0.999 * 999.0;
        const size_t lo = size_t(std::floor(rank));
        const double expect =
            sorted[lo] + (rank - double(lo)) * (sorted[lo + 1] - sorted[lo]);

        NormalizeResult r = normalize(m);
        CHECK(r.scale == doctest::Approx(expect).epsilon(1e-9));
        CHECK(r.scale == doctest::Approx(999.001).epsilon(1e-6));
        CHECK(*std::max_element(r.map.data.begin(), r.map.data.end()) == 1.0f);
    }
    SUBCASE("all-ones map") {
        DensityMap m({3, 3, 3}, 1.0f);
        NormalizeResult r = normalize(m);
        CHECK(r.scale == doctest::Approx(1.0));
        for (float v : r.map.data) CHECK(v == 1.0f);
    }
    SUBCASE("huge outlier clamps to 1, scale stays near 1") {
        DensityMap m({47, 47, 47}, 1.0f);  // 103823 voxels
        m.data[100] = 1e6f;
        NormalizeResult r = normalize(m);
        CHECK(r.scale == doctest::Approx(1.0));
        CHECK(r.map.data[100] == 1.0f);
    }
    SUBCASE("all non-positive map is an error") {
        DensityMap m({2, 2, 2}, -1.0f);
        CHECK_THROWS_AS(normalize(m), Error);
    }
    SUBCASE("idempotent when the output percentile is 1") {
        DensityMap m({10, 10, 10});
        for (int64_t i = 0; i < 1000; ++i) m.data[size_t(i)] = float(i % 97) / 96.0f;
        NormalizeResult r1 = normalize(m);
        NormalizeResult r2 = normalize(r1.map);
        REQUIRE(r2.scale == doctest::Approx(1.0).epsilon(1e-6));
        for (size_t i = 0; i < r1.map.data.size(); ++i)
            CHECK(r2.map.data[i] == doctest::Approx(r1.map.data[i]).epsilon(1e-6));
    }
    SUBCASE("nonzero-only flag changes the population") {
        DensityMap m({10, 10, 10}, 0.0f);
        for (int64_t i = 0; i < 500; ++i) m.data[size_t(i)] = 2.0f;
        NormalizeResult all = normalize(m);
        NormalizeResult nz = normalize(m, 99.9, /*nonzero_only=*/true);
        CHECK(nz.scale == doctest::Approx(2.0));
        CHECK(all.scale == doctest::Approx(2.0));  // 99.9th over half-zeros still lands on 2
    }
}

TEST_CASE("make_plan cube counts") {
    CHECK(make_plan({50, 50, 50}).cube_count() == 1);
    CHECK(make_plan({100, 100, 100}).cube_count() == 8);
    CHECK(make_plan({101, 60, 50}).cube_count() == 6);  // 3 x 2 x 1
    CHECK(make_plan({1, 1, 1}).cube_count() == 1);

    TilePlan plan = make_plan({100, 100, 100});
    CHECK(plan.padded_dims == Dims3{228, 228, 228});
    // First cube: core starts at 0, origin = pad - rim = 64 - 7 = 57.
    CHECK(plan.cube_origins[0] == Dims3{57, 57, 57});
    for (const Dims3& o : plan.cube_origins)
        for (int i = 0; i < 3; ++i) {
            CHECK(o[i] >= 0);
            CHECK(o[i] + plan.cube_size <= plan.padded_dims[i]);
        }
}

TEST_CASE("core coverage: every voxel owned exactly once after dedup") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        Dims3 dims{int64_t(rng() % 140 + 1), int64_t(rng() % 140 + 1), int64_t(rng() % 140 + 1)};
        TilePlan plan = make_plan(dims);
        // Owner = last cube (in origin order) whose core contains the voxel.
        std::vector<int32_t> owner(size_t(volume_of(dims)), -1);
        const int64_t rim = plan.rim();
        for (int64_t c = 0; c < plan.cube_count(); ++c) {
            const Dims3 o = plan.cube_origins[size_t(c)];
            for (int64_t z = 0; z < plan.core_size; ++z)
                for (int64_t y = 0; y < plan.core_size; ++y)
                    for (int64_t x = 0; x < plan.core_size; ++x) {
                        const int64_t mx = o[0] + rim + x - plan.pad;
                        const int64_t my = o[1] + rim + y - plan.pad;
                        const int64_t mz = o[2] + rim + z - plan.pad;
                        if (mx < 0 || my < 0 || mz < 0 || mx >= dims[0] || my >= dims[1] ||
                            mz >= dims[2])
                            continue;
                        owner[size_t((mz * dims[1] + my) * dims[0] + mx)] = int32_t(c);
                    }
        }
        const bool all_owned =
            std::none_of(owner.begin(), owner.end(), [](int32_t v) { return v < 0; });
        REQUIRE(all_owned);
    }
}

TEST_CASE("partition basics") {
    SUBCASE("single-cube map: core equals the map, rim is zero padding") {
        DensityMap m = testutil::random_map({50, 50, 50}, 5);
        TilePlan plan = make_plan(m.dims);
        REQUIRE(plan.cube_count() == 1);
        CubeBatch batch = partition(m, plan);
        const auto& cube = batch.cubes[0];
        const int64_t cs = plan.cube_size;
        for (int64_t z = 0; z < cs; ++z)
            for (int64_t y = 0; y < cs; ++y)
                for (int64_t x = 0; x < cs; ++x) {
                    const float v = cube[size_t((z * cs + y) * cs + x)];
                    const int64_t mx = x - 7, my = y - 7, mz = z - 7;
                    if (mx >= 0 && mx < 50 && my >= 0 && my < 50 && mz >= 0 && mz < 50)
                        CHECK(v == m.at(mx, my, mz));
                    else
                        CHECK(v == 0.0f);
                }
    }
    SUBCASE("plan built for other dims is rejected") {
        DensityMap m = testutil::random_map({20, 20, 20}, 6);
        TilePlan plan = make_plan({30, 30, 30});
        CHECK_THROWS_AS(partition(m, plan), Error);
    }
}

TEST_CASE("stitch round trip is bit-exact") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        Dims3 dims{int64_t(rng() % 120 + 1), int64_t(rng() % 120 + 1), int64_t(rng() % 120 + 1)};
        DensityMap m = testutil::random_map(dims, rng());
        TilePlan plan = make_plan(dims);
        DensityMap r = stitch(partition(m, plan), plan);
        REQUIRE(r.dims == m.dims);
        REQUIRE(r.data == m.data);
    }
}

TEST_CASE("round trip holds for configured cube/core sizes") {
    std::mt19937_64 rng(101);
    for (auto [cube, core] : {std::pair<int64_t, int64_t>{32, 18}, {16, 2}, {64, 50}}) {
        Dims3 dims{int64_t(rng() % 60 + 1), int64_t(rng() % 60 + 1), int64_t(rng() % 60 + 1)};
        DensityMap m = testutil::random_map(dims, rng());
        TilePlan plan = make_plan(dims, cube, core, cube);
        DensityMap r = stitch(partition(m, plan), plan);
        REQUIRE(r.data == m.data);
    }
    CHECK_THROWS_AS(make_plan({10, 10, 10}, 64, 51, 64), Error);  // odd rim
    CHECK_THROWS_AS(make_plan({10, 10, 10}, 14, 0, 14), Error);   // empty core
}

TEST_CASE("stitch validates the batch") {
    DensityMap m = testutil::random_map({60, 60, 60}, 8);
    TilePlan plan = make_plan(m.dims);
    CubeBatch batch = partition(m, plan);
    SUBCASE("missing cube") {
        batch.indices[0] = batch.indices[1];  // duplicate entry, cube 0 absent
        CHECK_THROWS_WITH_AS(stitch(batch, plan), doctest::Contains("missing"), Error);
    }
    SUBCASE("short batch") {
        batch.cubes.pop_back();
        batch.indices.pop_back();
        CHECK_THROWS_AS(stitch(batch, plan), Error);
    }
    SUBCASE("wrong cube size") {
        batch.cubes[0].resize(10);
        CHECK_THROWS_AS(stitch(batch, plan), Error);
    }
}

TEST_CASE("tile plan JSON round trip") {
    TilePlan plan = make_plan({101, 60, 50});
    TilePlan again = TilePlan::from_json(plan.to_json());
    CHECK(again.original_dims == plan.original_dims);
    CHECK(again.padded_dims == plan.padded_dims);
    CHECK(again.cube_origins == plan.cube_origins);
    CHECK_THROWS_AS(TilePlan::from_json("{not json"), Error);
}

TEST_CASE("augment") {
    const int64_t cs = 16;
    std::vector<float> cube = testutil::random_vec(size_t(cs * cs * cs), 17, 0.0, 1.0);

    SUBCASE("zero-strength config is the identity") {
        AugmentConfig cfg;  // all zero / factor 1
        CHECK(augment(cube, cs, 123, cfg) == cube);
    }
    SUBCASE("same seed reproduces, different seed differs") {
        AugmentConfig cfg;
        cfg.noise_sigma_min = 0.01;
        cfg.noise_sigma_max = 0.05;
        cfg.blur_sigma_min = 0.4;
        cfg.blur_sigma_max = 1.2;
        cfg.aniso_min = 1.0;
        cfg.aniso_max = 2.0;
        auto a = augment(cube, cs, 7, cfg);
        auto b = augment(cube, cs, 7, cfg);
        auto c = augment(cube, cs, 8, cfg);
        CHECK(a == b);
        CHECK(a != c);
    }
    SUBCASE("blur preserves the mean within 1e-4") {
        std::vector<float> blurred = cube;
        gaussian_blur_inplace(blurred, {cs, cs, cs}, 1.5);
        double m0 = 0, m1 = 0;
        for (size_t i = 0; i < cube.size(); ++i) {
            m0 += cube[i];
            m1 += blurred[i];
        }
        m0 /= double(cube.size());
        m1 /= double(cube.size());
        CHECK(m1 == doctest::Approx(m0).epsilon(1e-4));
    }
    SUBCASE("invalid ranges are rejected") {
        AugmentConfig cfg;
        cfg.noise_sigma_min = 0.5;
        cfg.noise_sigma_max = 0.1;
        CHECK_THROWS_AS(augment(cube, cs, 1, cfg), Error);
        AugmentConfig cfg2;
        cfg2.aniso_min = 0.5;
        CHECK_THROWS_AS(augment(cube, cs, 1, cfg2), Error);
    }
}
