// Command-line front end for the map-enhancement pipeline: simulation,
// embedding pooling, tiling, U-Net inference, and evaluation metrics.

#include <omp.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cryosamu/embed.hpp"
#include "cryosamu/metrics.hpp"
#include "cryosamu/mrc.hpp"
#include "cryosamu/optim.hpp"
#include "cryosamu/sim.hpp"
#include "cryosamu/structure.hpp"
#include "cryosamu/unet.hpp"
#include "cryosamu/volume.hpp"

using namespace cryosamu;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

struct PipelineConfig {
    double resolution = 2.0;
    double grid_interval = 1.0;
    int64_t pool_length = 800;
    double percentile = 99.9;
    int64_t cube_size = 64;
    int64_t base_channels = 16;
    int64_t attn_heads = 4;
    double dropout_p = 0.2;
    int64_t groupnorm_groups = 8;
    int64_t embed_dim = 512;
    int64_t embed_len = 800;
    double v_atom = 16.0;
    double atom_radius = 3.0;
    double peak_fraction = 0.1;
    uint64_t seed = 0;
    int threads = 0;

    std::string canonical() const {
        std::ostringstream os;
        os << resolution << "|" << grid_interval << "|" << pool_length << "|" << percentile
           << "|" << cube_size << "|" << base_channels << "|" << attn_heads << "|" << dropout_p
           << "|" << groupnorm_groups << "|" << embed_dim << "|" << embed_len << "|" << v_atom
           << "|" << atom_radius << "|" << peak_fraction << "|" << seed;
        return os.str();
    }
};

void apply_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error(path + ": invalid JSON: " + e.what());
    }
    cfg.resolution = j.value("resolution", cfg.resolution);
    cfg.grid_interval = j.value("grid_interval", cfg.grid_interval);
    cfg.pool_length = j.value("L", cfg.pool_length);
    cfg.percentile = j.value("percentile", cfg.percentile);
    cfg.cube_size = j.value("cube_size", cfg.cube_size);
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    cfg.attn_heads = j.value("attn_heads", cfg.attn_heads);
    cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
    cfg.groupnorm_groups = j.value("groupnorm_groups", cfg.groupnorm_groups);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.embed_len = j.value("embed_len", cfg.embed_len);
    cfg.v_atom = j.value("v_atom", cfg.v_atom);
    cfg.atom_radius = j.value("atom_radius", cfg.atom_radius);
    cfg.peak_fraction = j.value("peak_fraction", cfg.peak_fraction);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
}

void log_line(const std::string& msg) { std::fprintf(stderr, "[cryosamu] %s\n", msg.c_str()); }

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return 0;
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, size_t(in.gcount()), h);
    }
    return h;
}

void log_input(const std::string& path) {
    char line[512];
    std::snprintf(line, sizeof(line), "input path=%s fnv64=%016" PRIx64, path.c_str(),
                  file_checksum(path));
    log_line(line);
}

void log_startup(const std::string& subcommand, const PipelineConfig& cfg) {
    char line[256];
    std::snprintf(line, sizeof(line),
                  "run subcommand=%s seed=%" PRIu64 " threads=%d config_fnv64=%016" PRIx64
                  " precedence=cli>file>default",
                  subcommand.c_str(), cfg.seed, cfg.threads, fnv1a64(cfg.canonical()));
    log_line(line);
}

ModelConfig model_config_of(const PipelineConfig& cfg) {
    ModelConfig m;
    m.base_channels = cfg.base_channels;
    m.attn_heads = cfg.attn_heads;
    m.dropout_p = cfg.dropout_p;
    m.groupnorm_groups = cfg.groupnorm_groups;
    m.embed_dim = cfg.embed_dim;
    m.embed_len = cfg.embed_len;
    m.cube_size = cfg.cube_size;
    m.validate();
    return m;
}

void write_json_report(const json& j, const std::string& out_path) {
    if (out_path.empty()) return;
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw io_error("cannot write " + out_path);
    out << j.dump(2) << "\n";
}

std::string cube_file_name(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "cube_%05" PRId64 ".mrc", index);
    return buf;
}

// ---- subcommand bodies ----

int cmd_simulate(const PipelineConfig& cfg, const std::string& pdb_path,
                 const std::string& out_path, const std::vector<int64_t>& dims,
                 const std::vector<double>& origin) {
    log_input(pdb_path);
    ProteinStructure s = read_pdb(pdb_path);
    SimParams p = derive_params(cfg.resolution, cfg.grid_interval);

    std::optional<GridGeometry> grid;
    if (!dims.empty()) {
        if (dims.size() != 3) throw config_error("--dims expects nx,ny,nz");
        GridGeometry g;
        g.dims = {dims[0], dims[1], dims[2]};
        g.voxel_size = {cfg.grid_interval, cfg.grid_interval, cfg.grid_interval};
        if (!origin.empty()) {
            if (origin.size() != 3) throw config_error("--origin expects x,y,z");
            g.origin = {origin[0], origin[1], origin[2]};
        }
        grid = g;
    }

    SimulatedMap sim = simulate_map(s, p, grid);
    write_mrc(sim.map, out_path);
    char line[256];
    std::snprintf(line, sizeof(line), "simulate atoms=%zu dims=%" PRId64 "x%" PRId64 "x%" PRId64,
                  s.atom_count(), sim.map.dims[0], sim.map.dims[1], sim.map.dims[2]);
    log_line(line);
    return 0;
}

int cmd_pool(const PipelineConfig& cfg, const std::string& emb_path,
             const std::string& manifest_path, const std::string& out_path) {
    log_input(emb_path);
    if (!manifest_path.empty()) log_input(manifest_path);
    EmbeddingSet E = load_embeddings(emb_path, manifest_path);
    PooledEmbedding pooled = pool_embeddings(E, cfg.pool_length);
    save_pooled(pooled, out_path);
    char line[256];
    std::snprintf(line, sizeof(line),
                  "pool chains=%" PRId64 " residues=%" PRId64 " d=%" PRId64 " L=%" PRId64,
                  E.C, E.R, E.d, pooled.L);
    log_line(line);
    return 0;
}

int cmd_tile(const PipelineConfig& cfg, const std::string& in_path, const std::string& out_dir) {
    log_input(in_path);
    std::vector<std::string> warnings;
    DensityMap m = read_mrc(in_path, &warnings);
    for (const auto& w : warnings) log_line("warning " + w);

    const int64_t cube = cfg.cube_size;
    TilePlan plan = make_plan(m.dims, cube, cube - 14, cube);
    CubeBatch batch = partition(m, plan);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create " + out_dir);

    json plan_json = json::parse(plan.to_json());
    plan_json["grid"] = {{"voxel_size", {m.voxel_size.x, m.voxel_size.y, m.voxel_size.z}},
                         {"origin", {m.origin.x, m.origin.y, m.origin.z}}};
    std::ofstream(out_dir + "/plan.json", std::ios::trunc) << plan_json.dump(2) << "\n";

    for (int64_t c = 0; c < plan.cube_count(); ++c) {
        DensityMap cube_map({cube, cube, cube});
        cube_map.data = batch.cubes[size_t(c)];
        cube_map.voxel_size = m.voxel_size;
        const Dims3 o = plan.cube_origins[size_t(c)];
        cube_map.origin = {m.origin.x + double(o[0] - plan.pad) * m.voxel_size.x,
                           m.origin.y + double(o[1] - plan.pad) * m.voxel_size.y,
                           m.origin.z + double(o[2] - plan.pad) * m.voxel_size.z};
        write_mrc(cube_map, out_dir + "/" + cube_file_name(c));
    }
    log_line("tile cubes=" + std::to_string(plan.cube_count()) + " out=" + out_dir);
    return 0;
}

int cmd_stitch(const std::string& plan_path, const std::string& cubes_dir,
               const std::string& out_path) {
    log_input(plan_path);
    std::ifstream in(plan_path);
    if (!in) throw io_error("cannot open " + plan_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TilePlan plan = TilePlan::from_json(text);

    CubeBatch batch;
    for (int64_t c = 0; c < plan.cube_count(); ++c) {
        const std::string path = cubes_dir + "/" + cube_file_name(c);
        DensityMap cube = read_mrc(path);
        if (cube.dims != Dims3{plan.cube_size, plan.cube_size, plan.cube_size})
            throw io_error(path + ": cube dims do not match the plan");
        batch.cubes.push_back(std::move(cube.data));
        batch.indices.push_back(c);
    }
    DensityMap out = stitch(batch, plan);

    json plan_json = json::parse(text);
    if (plan_json.contains("grid")) {
        const auto& g = plan_json["grid"];
        out.voxel_size = {g["voxel_size"][0], g["voxel_size"][1], g["voxel_size"][2]};
        out.origin = {g["origin"][0], g["origin"][1], g["origin"][2]};
    }
    write_mrc(out, out_path);
    log_line("stitch cubes=" + std::to_string(plan.cube_count()) + " out=" + out_path);
    return 0;
}

int cmd_init_weights(const PipelineConfig& cfg, const std::string& out_dir) {
    ModelConfig mcfg = model_config_of(cfg);
    ModelWeights w = init_weights(mcfg, cfg.seed);
    save_weights(w, mcfg, out_dir);
    log_line("init-weights params=" + std::to_string(w.parameter_count()) + " out=" + out_dir);
    return 0;
}

int cmd_enhance(const PipelineConfig& cfg, const std::string& in_path,
                const std::string& weights_dir, const std::string& out_path, bool keep_grid) {
    log_input(in_path);
    auto [weights, mcfg] = load_weights(weights_dir);
    if (mcfg.cube_size < 16 || mcfg.cube_size % 8 != 0)
        throw config_error("enhance: model cube size must be a multiple of 8 and >= 16");

    std::vector<std::string> warnings;
    DensityMap input = read_mrc(in_path, &warnings);
    for (const auto& w : warnings) log_line("warning " + w);

    DensityMap working = resample(input, 1.0);
    NormalizeResult norm = normalize(working, cfg.percentile);
    char line[256];
    std::snprintf(line, sizeof(line), "enhance normalize scale=%.6g dims=%" PRId64 "x%" PRId64
                  "x%" PRId64, norm.scale, working.dims[0], working.dims[1], working.dims[2]);
    log_line(line);

    const int64_t cube = mcfg.cube_size;
    TilePlan plan = make_plan(norm.map.dims, cube, cube - 14, cube);
    CubeBatch batch = partition(norm.map, plan);

    for (int64_t c = 0; c < plan.cube_count(); ++c) {
        Tensor x = Tensor::from_data({1, 1, cube, cube, cube}, batch.cubes[size_t(c)]);
        Tensor y = unet_forward(x, std::nullopt, mcfg, weights, RunMode::eval);
        batch.cubes[size_t(c)] = y.data();
        if ((c + 1) % 8 == 0 || c + 1 == plan.cube_count())
            log_line("enhance cube " + std::to_string(c + 1) + "/" +
                     std::to_string(plan.cube_count()));
    }

    DensityMap enhanced = stitch(batch, plan);
    enhanced.voxel_size = norm.map.voxel_size;
    enhanced.origin = norm.map.origin;

    DensityMap out = enhanced;
    if (keep_grid) {
        // Restore the input's exact grid.
        const bool same = enhanced.dims == input.dims &&
                          std::abs(input.voxel_size.x - 1.0) < 1e-9 &&
                          std::abs(input.voxel_size.y - 1.0) < 1e-9 &&
                          std::abs(input.voxel_size.z - 1.0) < 1e-9;
        if (!same) out = regrid(enhanced, input.dims, input.voxel_size, input.origin);
        out.voxel_size = input.voxel_size;
        out.origin = input.origin;
    }
    write_mrc(out, out_path);
    log_line("enhance out=" + out_path);
    return 0;
}

int cmd_train_toy(const PipelineConfig& cfg, int64_t steps, double lr,
                  const std::string& out_weights) {
    ModelConfig mcfg = ModelConfig::toy();
    mcfg.attn_heads = cfg.attn_heads;
    mcfg.groupnorm_groups = cfg.groupnorm_groups;
    const int64_t cs = mcfg.cube_size;  // 16

    // Synthetic pair: simulated toy-peptide map as target, blurred + noised
    // copy as input, fixed-seed random embedding.
    const std::string toy_pdb =
        "ATOM      1  N   GLY A   1       4.500   6.000   7.000  1.00  0.00           N\n"
        "ATOM      2  CA  GLY A   1       5.600   6.800   7.400  1.00  0.00           C\n"
        "ATOM      3  C   GLY A   1       6.900   6.100   7.100  1.00  0.00           C\n"
        "ATOM      4  O   GLY A   1       7.000   4.900   7.300  1.00  0.00           O\n"
        "ATOM      5  N   ALA A   2       7.900   6.900   6.700  1.00  0.00           N\n"
        "ATOM      6  CA  ALA A   2       9.200   6.400   6.300  1.00  0.00           C\n"
        "ATOM      7  CB  ALA A   2       9.600   7.000   4.950  1.00  0.00           C\n"
        "ATOM      8  C   ALA A   2      10.200   6.800   7.400  1.00  0.00           C\n"
        "ATOM      9  O   ALA A   2      10.100   7.900   7.950  1.00  0.00           O\n"
        "ATOM     10  N   GLY A   3      11.100   5.900   7.700  1.00  0.00           N\n"
        "ATOM     11  CA  GLY A   3      12.200   6.100   8.600  1.00  0.00           C\n"
        "ATOM     12  C   GLY A   3      11.800   5.800  10.000  1.00  0.00           C\n"
        "ATOM     13  O   GLY A   3      10.800   5.100  10.250  1.00  0.00           O\n";
    ProteinStructure s = parse_pdb_string(toy_pdb, "toy");
    SimParams p = derive_params(cfg.resolution, 1.0);
    GridGeometry grid{{cs, cs, cs}, {1, 1, 1}, {0, 0, 0}};
    SimulatedMap sim = simulate_map(s, p, grid);
    NormalizeResult target = normalize(sim.map, cfg.percentile);

    AugmentConfig aug;
    aug.noise_sigma_min = aug.noise_sigma_max = 0.05;
    aug.blur_sigma_min = aug.blur_sigma_max = 1.0;
    std::vector<float> degraded = augment(target.map.data, cs, cfg.seed + 17, aug);

    Tensor x = Tensor::from_data({1, 1, cs, cs, cs}, degraded);
    Tensor y = Tensor::from_data({1, 1, cs, cs, cs}, target.map.data);
    std::vector<float> emb_data(static_cast<size_t>(mcfg.embed_len * mcfg.embed_dim));
    {
        std::mt19937_64 rng(cfg.seed + 41);
        for (float& e : emb_data)
            e = float(double(rng() >> 11) / 9007199254740992.0 * 2.0 - 1.0);
    }
    Tensor emb = Tensor::from_data({1, mcfg.embed_len, mcfg.embed_dim}, std::move(emb_data));

    ModelWeights w = init_weights(mcfg, cfg.seed);
    AdamWState state;
    AdamWConfig opt;
    CosineSchedule sched{lr, steps, 0.0};

    double initial_loss = 0.0, final_loss = 0.0;
    for (int64_t step = 0; step < steps; ++step) {
        TrainStepResult r = train_step(x, y, emb, mcfg, w, state, opt, sched.at(step),
                                       cfg.seed * 9973 + uint64_t(step));
        if (step == 0) initial_loss = r.loss;
        final_loss = r.loss;
        if (step % 10 == 0 || step == steps - 1) {
            char line[160];
            std::snprintf(line, sizeof(line), "train-toy step=%" PRId64 " loss=%.6g lr=%.3g",
                          step, r.loss, r.lr);
            log_line(line);
        }
    }

    json report;
    report["schema_version"] = kSchemaVersion;
    report["steps"] = steps;
    report["initial_loss"] = initial_loss;
    report["final_loss"] = final_loss;
    report["ratio"] = final_loss / initial_loss;
    std::printf("%s\n", report.dump(2).c_str());

    if (!out_weights.empty()) save_weights(w, mcfg, out_weights);
    return 0;
}

int cmd_eval_cc(const PipelineConfig& cfg, const std::string& map_path,
                const std::string& ref_path, const std::string& pdb_path,
                const std::string& out_path) {
    log_input(map_path);
    log_input(ref_path);
    DensityMap a = read_mrc(map_path);
    DensityMap b = read_mrc(ref_path);

    CcOptions opts;
    opts.v_atom = cfg.v_atom;
    opts.atom_radius = cfg.atom_radius;
    opts.peak_fraction = cfg.peak_fraction;

    json report;
    report["schema_version"] = kSchemaVersion;
    report["cc_box"] = cc_box(a, b);
    report["cc_peaks"] = cc_peaks(a, b, opts.peak_fraction);
    if (!pdb_path.empty()) {
        log_input(pdb_path);
        ProteinStructure s = read_pdb(pdb_path);
        report["cc_volume"] = cc_volume(a, b, s, a.voxel_volume(), opts);
    }

    std::fprintf(stderr, "[cryosamu] %-10s %12.6f\n", "cc_box", report["cc_box"].get<double>());
    std::fprintf(stderr, "[cryosamu] %-10s %12.6f\n", "cc_peaks",
                 report["cc_peaks"].get<double>());
    if (report.contains("cc_volume"))
        std::fprintf(stderr, "[cryosamu] %-10s %12.6f\n", "cc_volume",
                     report["cc_volume"].get<double>());
    std::printf("%s\n", report.dump(2).c_str());
    write_json_report(report, out_path);
    return 0;
}

int cmd_eval_fsc(const std::string& a_path, const std::string& b_path,
                 const std::string& out_path) {
    log_input(a_path);
    log_input(b_path);
    DensityMap a = read_mrc(a_path);
    DensityMap b = read_mrc(b_path);
    FscCurve c = fsc(a, b);

    json report;
    report["schema_version"] = kSchemaVersion;
    report["fsc05"] = c.fsc05;
    report["at_nyquist"] = c.at_nyquist;
    report["shell_centers"] = c.shell_centers;
    report["fsc"] = c.fsc;

    std::fprintf(stderr, "[cryosamu] %-12s %10.4f A%s\n", "fsc05", c.fsc05,
                 c.at_nyquist ? " (no crossing; Nyquist)" : "");
    std::printf("%s\n", report.dump(2).c_str());
    write_json_report(report, out_path);
    return 0;
}

int cmd_eval_rscc(const PipelineConfig& cfg, const std::string& map_path,
                  const std::string& pdb_path, const std::string& baseline_path,
                  const std::string& out_path) {
    log_input(map_path);
    log_input(pdb_path);
    DensityMap m = read_mrc(map_path);
    ProteinStructure s = read_pdb(pdb_path);
    SimParams p = derive_params(cfg.resolution, cfg.grid_interval);
    RsccReport r = rscc(m, s, p);

    json report;
    report["schema_version"] = kSchemaVersion;
    auto& residues = report["residues"] = json::array();
    for (const RsccEntry& e : r.residues) {
        residues.push_back({{"chain", e.chain},
                            {"seq", e.seq},
                            {"rscc", e.rscc},
                            {"present", e.present}});
    }
    report["chain_means"] = r.chain_means;

    if (!baseline_path.empty()) {
        log_input(baseline_path);
        std::ifstream in(baseline_path);
        if (!in) throw io_error("cannot open " + baseline_path);
        json bj;
        in >> bj;
        RsccReport baseline;
        for (const auto& e : bj.at("residues")) {
            baseline.residues.push_back(RsccEntry{e.at("chain").get<std::string>(),
                                                  e.at("seq").get<int>(),
                                                  e.at("rscc").get<double>(),
                                                  e.at("present").get<bool>()});
        }
        report["improved_fraction"] = r.improved_fraction(baseline);
    }

    for (const auto& [chain, mean] : r.chain_means)
        std::fprintf(stderr, "[cryosamu] chain %-4s mean_rscc %10.6f\n", chain.c_str(), mean);
    std::printf("%s\n", report.dump(2).c_str());
    write_json_report(report, out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cryo-EM density map enhancement pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // --seed/--threads/--config may follow the subcommand

    PipelineConfig cfg;
    // Config file is applied before flag parsing so flags win.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                apply_config_file(cfg, argv[i + 1]);
            } catch (const Error& e) {
                std::fprintf(stderr, "[cryosamu] error category=config message=\"%s\"\n",
                             e.what());
                return 3;
            }
        }
    }
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--seed", cfg.seed, "global RNG seed");
    app.add_option("--threads", cfg.threads, "cap internal parallelism (0 = library default)");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "simulate a density map from a structure");
    std::string sim_pdb, sim_out;
    std::vector<int64_t> sim_dims;
    std::vector<double> sim_origin;
    sim_cmd->add_option("--pdb", sim_pdb, "input PDB file")->required();
    sim_cmd->add_option("--resolution", cfg.resolution, "target resolution in Angstrom");
    sim_cmd->add_option("--grid", cfg.grid_interval, "grid interval in Angstrom/voxel");
    sim_cmd->add_option("--out", sim_out, "output MRC path")->required();
    sim_cmd->add_option("--dims", sim_dims, "explicit grid dims nx,ny,nz")->delimiter(',');
    sim_cmd->add_option("--origin", sim_origin, "explicit grid origin x,y,z")->delimiter(',');

    // pool
    auto* pool_cmd = app.add_subcommand("pool", "pool embeddings to a fixed-size representation");
    std::string pool_emb, pool_manifest, pool_out;
    pool_cmd->add_option("--emb", pool_emb, "embedding blob or .npy file")->required();
    pool_cmd->add_option("--manifest", pool_manifest, "JSON manifest for raw blobs");
    pool_cmd->add_option("--L", cfg.pool_length, "target representation length");
    pool_cmd->add_option("--out", pool_out, "output blob path")->required();

    // tile
    auto* tile_cmd = app.add_subcommand("tile", "partition a map into cubes");
    std::string tile_in, tile_out_dir;
    tile_cmd->add_option("--in", tile_in, "input MRC path")->required();
    tile_cmd->add_option("--out-dir", tile_out_dir, "output directory")->required();
    tile_cmd->add_option("--cube", cfg.cube_size, "cube edge length in voxels");

    // stitch
    auto* stitch_cmd = app.add_subcommand("stitch", "reassemble cubes into a map");
    std::string stitch_plan, stitch_cubes, stitch_out;
    stitch_cmd->add_option("--plan", stitch_plan, "tile plan JSON")->required();
    stitch_cmd->add_option("--cubes", stitch_cubes, "directory of cube MRC files")->required();
    stitch_cmd->add_option("--out", stitch_out, "output MRC path")->required();

    // init-weights
    auto* init_cmd = app.add_subcommand("init-weights", "write randomly initialized weights");
    std::string init_out;
    init_cmd->add_option("--out", init_out, "output weights directory")->required();
    init_cmd->add_option("--base-channels", cfg.base_channels, "first-level channel count");
    init_cmd->add_option("--cube-size", cfg.cube_size, "cube edge the model processes");
    init_cmd->add_option("--embed-dim", cfg.embed_dim, "embedding dimension");
    init_cmd->add_option("--embed-len", cfg.embed_len, "pooled embedding length");

    // enhance
    auto* enh_cmd = app.add_subcommand("enhance", "run the network over a map");
    std::string enh_in, enh_weights, enh_out;
    bool enh_no_restore = false;
    enh_cmd->add_option("--in", enh_in, "input MRC path")->required();
    enh_cmd->add_option("--weights", enh_weights, "weights directory")->required();
    enh_cmd->add_option("--out", enh_out, "output MRC path")->required();
    enh_cmd->add_flag("--no-restore-grid", enh_no_restore,
                      "emit the 1 A/voxel working grid instead of the input grid");

    // train-toy
    auto* toy_cmd = app.add_subcommand("train-toy", "overfit one synthetic pair");
    int64_t toy_steps = 200;
    double toy_lr = 1e-4;
    std::string toy_out_weights;
    toy_cmd->add_option("--steps", toy_steps, "optimization steps");
    toy_cmd->add_option("--lr", toy_lr, "initial learning rate (cosine-annealed)");
    toy_cmd->add_option("--out-weights", toy_out_weights, "save trained weights here");

    // eval-cc
    auto* cc_cmd = app.add_subcommand("eval-cc", "real-space correlations");
    std::string cc_map, cc_ref, cc_pdb, cc_out;
    cc_cmd->add_option("--map", cc_map, "map to evaluate")->required();
    cc_cmd->add_option("--ref", cc_ref, "reference map")->required();
    cc_cmd->add_option("--pdb", cc_pdb, "structure for cc_volume");
    cc_cmd->add_option("--fraction", cfg.peak_fraction, "cc_peaks top fraction");
    cc_cmd->add_option("--v-atom", cfg.v_atom, "per-atom volume for cc_volume");
    cc_cmd->add_option("--atom-radius", cfg.atom_radius, "cc_volume candidate radius");
    cc_cmd->add_option("--out", cc_out, "write the JSON report here too");

    // eval-fsc
    auto* fsc_cmd = app.add_subcommand("eval-fsc", "Fourier shell correlation");
    std::string fsc_a, fsc_b, fsc_out;
    fsc_cmd->add_option("--a", fsc_a, "first map")->required();
    fsc_cmd->add_option("--b", fsc_b, "second map")->required();
    fsc_cmd->add_option("--out", fsc_out, "write the JSON report here too");

    // eval-rscc
    auto* rscc_cmd = app.add_subcommand("eval-rscc", "per-residue real-space correlation");
    std::string rscc_map, rscc_pdb, rscc_baseline, rscc_out;
    rscc_cmd->add_option("--map", rscc_map, "experimental map")->required();
    rscc_cmd->add_option("--pdb", rscc_pdb, "structure")->required();
    rscc_cmd->add_option("--resolution", cfg.resolution, "simulation resolution");
    rscc_cmd->add_option("--baseline", rscc_baseline, "baseline eval-rscc JSON report");
    rscc_cmd->add_option("--out", rscc_out, "write the JSON report here too");

    CLI11_PARSE(app, argc, argv);

    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    try {
        std::string sub = app.get_subcommands().front()->get_name();
        log_startup(sub, cfg);
        if (sim_cmd->parsed())
            return cmd_simulate(cfg, sim_pdb, sim_out, sim_dims, sim_origin);
        if (pool_cmd->parsed()) return cmd_pool(cfg, pool_emb, pool_manifest, pool_out);
        if (tile_cmd->parsed()) return cmd_tile(cfg, tile_in, tile_out_dir);
        if (stitch_cmd->parsed()) return cmd_stitch(stitch_plan, stitch_cubes, stitch_out);
        if (init_cmd->parsed()) return cmd_init_weights(cfg, init_out);
        if (enh_cmd->parsed())
            return cmd_enhance(cfg, enh_in, enh_weights, enh_out, !enh_no_restore);
        if (toy_cmd->parsed()) return cmd_train_toy(cfg, toy_steps, toy_lr, toy_out_weights);
        if (cc_cmd->parsed()) return cmd_eval_cc(cfg, cc_map, cc_ref, cc_pdb, cc_out);
        if (fsc_cmd->parsed()) return cmd_eval_fsc(fsc_a, fsc_b, fsc_out);
        if (rscc_cmd->parsed())
            return cmd_eval_rscc(cfg, rscc_map, rscc_pdb, rscc_baseline, rscc_out);
        std::fprintf(stderr, "[cryosamu] error category=config message=\"unknown subcommand\"\n");
        return 3;
    } catch (const Error& e) {
        const char* cat = "internal";
        int code = 1;
        switch (e.category()) {
            case ErrorCategory::io: cat = "io"; code = 2; break;
            case ErrorCategory::config: cat = "config"; code = 3; break;
            case ErrorCategory::numeric: cat = "numeric"; code = 4; break;
            case ErrorCategory::internal: break;
        }
        std::fprintf(stderr, "[cryosamu] error category=%s message=\"%s\"\n", cat, e.what());
        return code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[cryosamu] error category=internal message=\"%s\"\n", e.what());
        return 1;
    }
}
