// Benchmark comparing the OpenMP kernels against their serial reference
// implementations. Build with the default Release flags and run:
//   ./build/tools/bench [threads]

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "cryosamu/ref.hpp"
#include "cryosamu/sim.hpp"
#include "cryosamu/structure.hpp"
#include "cryosamu/tensor.hpp"

using namespace cryosamu;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
    return m;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
    std::printf("%-22s %10.2f ms %10.2f ms %8.2fx   max|diff| %.3g\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms, diff);
}

std::vector<float> rand_vec(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<float> v(n);
    for (float& x : v) x = float(uni(rng));
    return v;
}

void bench_conv3d() {
    const int64_t B = 1, Cin = 16, Cout = 16, D = 32, H = 32, W = 32, k = 3;
    Tensor x = Tensor::from_data({B, Cin, D, H, W}, rand_vec(size_t(B * Cin * D * H * W), 1));
    Tensor w = Tensor::from_data({Cout, Cin, k, k, k}, rand_vec(size_t(Cout * Cin * k * k * k), 2));
    Tensor bias = Tensor::from_data({Cout}, rand_vec(size_t(Cout), 3));

    std::vector<float> serial_out(size_t(B * Cout * D * H * W));
    const double t_serial = time_best_of(3, [&] {
        ref::conv3d_naive(x.data().data(), B, Cin, D, H, W, w.data().data(), Cout, k, k, k,
                          bias.data().data(), 1, 1, serial_out.data());
    });
    std::vector<float> parallel_out;
    const double t_parallel = time_best_of(3, [&] {
        parallel_out = conv3d(x, w, bias, 1, 1).data();
    });
    report("conv3d 16ch 32^3", t_serial, t_parallel, max_abs_diff(serial_out, parallel_out));
}

void bench_simulate() {
    // Synthetic structure: ~3000 pseudo-atoms on a jittered lattice.
    std::string pdb;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> jitter(-0.4, 0.4);
    int serial = 1;
    char buf[96];
    for (int i = 0; i < 14 && serial <= 3000; ++i)
        for (int j = 0; j < 15 && serial <= 3000; ++j)
            for (int l = 0; l < 15 && serial <= 3000; ++l) {
                std::snprintf(buf, sizeof(buf),
                              "ATOM  %5d  CA  GLY A%4d    %8.3f%8.3f%8.3f  1.00  0.00          "
                              " C\n",
                              serial, serial % 9999, 3.0 * i + jitter(rng), 3.0 * j + jitter(rng),
                              3.0 * l + jitter(rng));
                pdb += buf;
                ++serial;
            }
    ProteinStructure s = parse_pdb_string(pdb, "bench");
    SimParams p = derive_params(2.0, 1.0);

    SimulatedMap auto_grid = simulate_map(s, p);  // warms up + fixes the grid
    const GridGeometry grid = GridGeometry::of(auto_grid.map);

    DensityMap serial_map;
    const double t_serial = time_best_of(2, [&] { serial_map = ref::simulate_naive(s, p, grid); });
    DensityMap parallel_map;
    const double t_parallel = time_best_of(2, [&] {
        parallel_map = simulate_map(s, p, grid).map;
    });
    report("simulate 3k atoms", t_serial, t_parallel,
           max_abs_diff(serial_map.data, parallel_map.data));
}

void bench_bmm() {
    const int64_t batch = 4, M = 512, N = 64, K = 512;
    Tensor a = Tensor::from_data({batch, M, K}, rand_vec(size_t(batch * M * K), 11));
    Tensor b = Tensor::from_data({batch, K, N}, rand_vec(size_t(batch * K * N), 12));

    std::vector<float> serial_out(size_t(batch * M * N));
    const double t_serial = time_best_of(3, [&] {
        ref::bmm_naive(a.data().data(), false, b.data().data(), false, serial_out.data(), batch,
                       M, N, K);
    });
    std::vector<float> parallel_out;
    const double t_parallel = time_best_of(3, [&] { parallel_out = bmm(a, b).data(); });
    report("bmm 4x512x512x64", t_serial, t_parallel, max_abs_diff(serial_out, parallel_out));
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) omp_set_num_threads(std::atoi(argv[1]));
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");
    bench_conv3d();
    bench_simulate();
    bench_bmm();
    return 0;
}
