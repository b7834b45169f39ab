#include "cryosamu/unet.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

namespace cryosamu {

void ModelConfig::validate() const {
    if (levels != 4) throw config_error("model: levels must be 4");
    if (base_channels < 1) throw config_error("model: base_channels must be >= 1");
    if (attn_heads < 1) throw config_error("model: attn_heads must be >= 1");
    if (groupnorm_groups < 1) throw config_error("model: groupnorm_groups must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw config_error("model: dropout_p must be in [0,1)");
    if (embed_dim < 1 || embed_len < 1) throw config_error("model: embed dims must be >= 1");
    for (int64_t m : channel_multipliers)
        if (m < 1) throw config_error("model: channel multipliers must be >= 1");
    for (int64_t c : channels()) {
        if (c % groupnorm_groups != 0)
            throw config_error("model: channels " + std::to_string(c) +
                               " not divisible by groupnorm_groups " +
                               std::to_string(groupnorm_groups));
        if (c % attn_heads != 0)
            throw config_error("model: channels " + std::to_string(c) +
                               " not divisible by attn_heads " + std::to_string(attn_heads));
    }
}

ModelConfig ModelConfig::toy() {
    ModelConfig cfg;
    cfg.base_channels = 8;
    cfg.cube_size = 16;
    return cfg;
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["base_channels"] = base_channels;
    j["channel_multipliers"] = channel_multipliers;
    j["levels"] = levels;
    j["attn_heads"] = attn_heads;
    j["dropout_p"] = dropout_p;
    j["groupnorm_groups"] = groupnorm_groups;
    j["embed_dim"] = embed_dim;
    j["embed_len"] = embed_len;
    j["cube_size"] = cube_size;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("invalid model config JSON: ") + e.what());
    }
    ModelConfig cfg;
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    if (j.contains("channel_multipliers"))
        cfg.channel_multipliers = j["channel_multipliers"].get<std::array<int64_t, 4>>();
    cfg.levels = j.value("levels", cfg.levels);
    cfg.attn_heads = j.value("attn_heads", cfg.attn_heads);
    cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
    cfg.groupnorm_groups = j.value("groupnorm_groups", cfg.groupnorm_groups);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.embed_len = j.value("embed_len", cfg.embed_len);
    cfg.cube_size = j.value("cube_size", cfg.cube_size);
    cfg.validate();
    return cfg;
}

void ModelWeights::add(const std::string& name, Tensor t) {
    if (by_name.count(name)) throw config_error("duplicate parameter name " + name);
    by_name[name] = tensors.size();
    names.push_back(name);
    tensors.push_back(std::move(t));
}

Tensor& ModelWeights::at(const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw config_error("unknown parameter " + name);
    return tensors[it->second];
}

const Tensor& ModelWeights::at(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw config_error("unknown parameter " + name);
    return tensors[it->second];
}

int64_t ModelWeights::parameter_count() const {
    int64_t n = 0;
    for (const Tensor& t : tensors) n += t.numel();
    return n;
}

void ModelWeights::set_requires_grad(bool b) {
    for (Tensor& t : tensors) t.set_requires_grad(b);
}

void ModelWeights::zero_grad() {
    for (Tensor& t : tensors) t.zero_grad();
}

namespace {

using Init = ParamSpec::Init;

struct SpecBuilder {
    std::vector<ParamSpec> specs;

    void conv(const std::string& name, int64_t oc, int64_t ic, int64_t k, bool bias = true) {
        specs.push_back({name + ".weight", {oc, ic, k, k, k}, Init::fan_in_uniform});
        if (bias) specs.push_back({name + ".bias", {oc}, Init::zero});
    }
    void gn(const std::string& name, int64_t ch) {
        specs.push_back({name + ".gamma", {ch}, Init::one});
        specs.push_back({name + ".beta", {ch}, Init::zero});
    }
    void res_block(const std::string& p, int64_t cin, int64_t cout) {
        gn(p + ".gn1", cin);
        conv(p + ".conv1", cout, cin, 3);
        gn(p + ".gn2", cout);
        conv(p + ".conv2", cout, cout, 3);
        if (cin != cout) conv(p + ".shortcut", cout, cin, 1);
    }
    void attn(const std::string& p, int64_t ch) {
        conv(p + ".qkv", 3 * ch, ch, 1, /*bias=*/false);
        conv(p + ".out", ch, ch, 1);
    }
    void xattn(const std::string& p, int64_t ch, int64_t d) {
        conv(p + ".q", ch, ch, 1, /*bias=*/false);
        specs.push_back({p + ".k.weight", {d, ch}, Init::fan_in_uniform});
        specs.push_back({p + ".v.weight", {d, ch}, Init::fan_in_uniform});
        specs.push_back({p + ".out.weight", {ch, ch, 1, 1, 1}, Init::zero});
        specs.push_back({p + ".out.bias", {ch}, Init::zero});
    }
};

int64_t fan_in_of(const Shape& s) {
    if (s.size() == 5) return s[1] * s[2] * s[3] * s[4];  // conv (OC, IC, k, k, k)
    if (s.size() == 2) return s[0];                       // linear (in, out), row-vector x W
    return s.empty() ? 1 : s[0];
}

double next_uniform(std::mt19937_64& rng) {
    return double(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1), 53 bits
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
    cfg.validate();
    const auto c = cfg.channels();
    SpecBuilder b;

    b.conv("stem.conv", c[0], 1, 3);
    for (int lvl = 0; lvl < 3; ++lvl) {
        const std::string p = "enc" + std::to_string(lvl + 1);
        b.res_block(p + ".res1", c[lvl], c[lvl]);
        b.res_block(p + ".res2", c[lvl], c[lvl]);
        b.attn(p + ".attn", c[lvl]);
        b.conv(p + ".down", c[lvl + 1], c[lvl], 3);
    }
    b.res_block("enc4.res1", c[3], c[3]);
    b.res_block("enc4.res2", c[3], c[3]);

    b.res_block("mid.res1", c[3], c[3]);
    b.attn("mid.attn", c[3]);
    b.xattn("mid.xattn", c[3], cfg.embed_dim);
    b.res_block("mid.res2", c[3], c[3]);

    b.res_block("dec4.res1", 2 * c[3], c[3]);
    b.res_block("dec4.res2", c[3], c[3]);
    b.conv("dec4.up", c[2], c[3], 3);
    for (int lvl = 2; lvl >= 0; --lvl) {
        const std::string p = "dec" + std::to_string(lvl + 1);
        b.res_block(p + ".res1", 2 * c[lvl], c[lvl]);
        b.res_block(p + ".res2", c[lvl], c[lvl]);
        b.attn(p + ".attn", c[lvl]);
        if (lvl > 0) b.conv(p + ".up", c[lvl - 1], c[lvl], 3);
    }
    b.gn("head.gn", c[0]);
    b.conv("head.conv", 1, c[0], 3);
    return b.specs;
}

ModelWeights init_weights(const ModelConfig& cfg, uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelWeights w;
    for (const ParamSpec& spec : parameter_specs(cfg)) {
        const int64_t n = shape_numel(spec.shape);
        std::vector<float> data(static_cast<size_t>(n));
        switch (spec.init) {
            case Init::zero:
                break;
            case Init::one:
                std::fill(data.begin(), data.end(), 1.0f);
                break;
            case Init::fan_in_uniform: {
                const double bound = 1.0 / std::sqrt(double(fan_in_of(spec.shape)));
                for (int64_t i = 0; i < n; ++i)
                    data[size_t(i)] = float((2.0 * next_uniform(rng) - 1.0) * bound);
                break;
            }
        }
        w.add(spec.name, Tensor::from_data(spec.shape, std::move(data), false));
    }
    return w;
}

namespace {

Tensor empty_bias() { return Tensor(); }

struct ForwardCtx {
    ModelWeights& w;
    const ModelConfig& cfg;
    bool training;
    std::mt19937_64 rng;

    Tensor maybe_dropout(const Tensor& x) {
        if (!training || cfg.dropout_p == 0.0) return x;
        return dropout(x, cfg.dropout_p, rng());
    }
};

Tensor res_block_fwd(ForwardCtx& ctx, const std::string& p, const Tensor& x, int64_t cin,
                     int64_t cout) {
    Tensor h = group_norm(x, ctx.cfg.groupnorm_groups, ctx.w.at(p + ".gn1.gamma"),
                          ctx.w.at(p + ".gn1.beta"));
    h = silu(h);
    h = ctx.maybe_dropout(h);
    h = conv3d(h, ctx.w.at(p + ".conv1.weight"), ctx.w.at(p + ".conv1.bias"), 1, 1);
    h = group_norm(h, ctx.cfg.groupnorm_groups, ctx.w.at(p + ".gn2.gamma"),
                   ctx.w.at(p + ".gn2.beta"));
    h = silu(h);
    h = ctx.maybe_dropout(h);
    h = conv3d(h, ctx.w.at(p + ".conv2.weight"), ctx.w.at(p + ".conv2.bias"), 1, 1);
    Tensor shortcut = (cin == cout)
                          ? x
                          : conv3d(x, ctx.w.at(p + ".shortcut.weight"),
                                   ctx.w.at(p + ".shortcut.bias"), 1, 0);
    return add(h, shortcut);
}

}  // namespace

Tensor linear_self_attention(const Tensor& x, int64_t heads, const Tensor& w_qkv,
                             const Tensor& w_out, const Tensor& b_out) {
    if (x.ndim() != 5) throw config_error("linear_self_attention expects (B,C,D,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    if (C % heads != 0) throw config_error("attention: channels not divisible by heads");
    const int64_t dh = C / heads;
    const int64_t n = D * H * W;

    Tensor qkv = conv3d(x, w_qkv, empty_bias(), 1, 0);  // (B, 3C, D, H, W)
    Tensor q = reshape(narrow(qkv, 1, 0, C), {B * heads, dh, n});
    Tensor k = reshape(narrow(qkv, 1, C, C), {B * heads, dh, n});
    Tensor v = reshape(narrow(qkv, 1, 2 * C, C), {B * heads, dh, n});

    // Feature-map formulation: softmax over the key's spatial axis and the
    // (temperature-scaled) query's channel axis; with a single voxel this
    // reduces to full softmax attention.
    k = softmax_lastdim(k);
    q = mul_scalar(q, 1.0 / std::sqrt(double(dh)));
    q = permute(softmax_lastdim(permute(q, {0, 2, 1})), {0, 2, 1});  // softmax over dh

    Tensor context = bmm(k, v, false, true);        // (Bh, dh_k, dh_v)
    Tensor out_tok = bmm(context, q, true, false);  // (Bh, dh_v, n)
    Tensor out_sp = reshape(out_tok, {B, C, D, H, W});
    Tensor proj = conv3d(out_sp, w_out, b_out, 1, 0);
    return add(x, proj);
}

Tensor cross_attention(const Tensor& x, const std::optional<Tensor>& emb, int64_t heads,
                       const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                       const Tensor& w_out, const Tensor& b_out, bool bypass) {
    if (x.ndim() != 5) throw config_error("cross_attention expects (B,C,D,H,W)");
    if (bypass) return x;  // residual path with the attention branch skipped
    if (!emb || !emb->defined())
        throw config_error("cross_attention: missing embeddings in non-bypass mode");
    const int64_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    if (emb->ndim() != 3 || emb->dim(0) != B)
        throw config_error("cross_attention: embeddings must be (B, L, d)");
    const int64_t L = emb->dim(1), d = emb->dim(2);
    if (w_k.ndim() != 2 || w_k.dim(0) != d || w_k.dim(1) != C)
        throw config_error("cross_attention: key projection shape mismatch");
    if (C % heads != 0) throw config_error("attention: channels not divisible by heads");
    const int64_t dh = C / heads;
    const int64_t n = D * H * W;

    Tensor q = conv3d(x, w_q, empty_bias(), 1, 0);                    // (B, C, D, H, W)
    q = reshape(q, {B * heads, dh, n});
    q = reshape(permute(q, {0, 2, 1}), {B * heads, n, dh});           // tokens x dh
    q = mul_scalar(q, 1.0 / std::sqrt(double(dh)));

    auto project = [&](const Tensor& w_proj) {
        Tensor t = bmm(reshape(*emb, {1, B * L, d}), reshape(w_proj, {1, d, C}));
        t = reshape(t, {B, L, heads, dh});
        t = permute(t, {0, 2, 1, 3});  // (B, heads, L, dh)
        return reshape(t, {B * heads, L, dh});
    };
    Tensor K = project(w_k);
    Tensor V = project(w_v);

    Tensor scores = bmm(q, K, false, true);   // (Bh, n, L)
    Tensor attn = softmax_lastdim(scores);
    Tensor out_tok = bmm(attn, V);            // (Bh, n, dh)
    out_tok = permute(reshape(out_tok, {B, heads, n, dh}), {0, 1, 3, 2});  // (B, heads, dh, n)
    Tensor out_sp = reshape(out_tok, {B, C, D, H, W});
    Tensor proj = conv3d(out_sp, w_out, b_out, 1, 0);
    return add(x, proj);
}

Tensor unet_forward(const Tensor& x, const std::optional<Tensor>& emb, const ModelConfig& cfg,
                    ModelWeights& weights, RunMode mode, uint64_t dropout_seed, bool bypass) {
    cfg.validate();
    if (x.ndim() != 5 || x.dim(1) != 1)
        throw config_error("unet: input must be (B, 1, D, H, W)");
    for (int i = 2; i < 5; ++i)
        if (x.dim(i) % 8 != 0 || x.dim(i) < 8)
            throw config_error("unet: spatial size " + std::to_string(x.dim(i)) +
                               " must be divisible by 8");
    const bool xattn_bypass = (mode == RunMode::eval) || bypass;
    if (!xattn_bypass) {
        if (!emb || !emb->defined())
            throw config_error("unet: train mode requires embeddings unless bypass is set");
        if (emb->ndim() != 3 || emb->dim(0) != x.dim(0) || emb->dim(1) != cfg.embed_len ||
            emb->dim(2) != cfg.embed_dim)
            throw config_error("unet: embeddings must be (B, " + std::to_string(cfg.embed_len) +
                               ", " + std::to_string(cfg.embed_dim) + ")");
    }

    ForwardCtx ctx{weights, cfg, mode == RunMode::train, std::mt19937_64(dropout_seed)};
    const auto c = cfg.channels();
    const int64_t heads = cfg.attn_heads;
    auto W = [&](const std::string& name) -> Tensor& { return weights.at(name); };
    auto attn_fwd = [&](const std::string& p, const Tensor& t) {
        return linear_self_attention(t, heads, W(p + ".qkv.weight"), W(p + ".out.weight"),
                                     W(p + ".out.bias"));
    };

    Tensor h = conv3d(x, W("stem.conv.weight"), W("stem.conv.bias"), 1, 1);

    std::vector<Tensor> skips;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const std::string p = "enc" + std::to_string(lvl + 1);
        h = res_block_fwd(ctx, p + ".res1", h, c[lvl], c[lvl]);
        h = res_block_fwd(ctx, p + ".res2", h, c[lvl], c[lvl]);
        h = attn_fwd(p + ".attn", h);
        skips.push_back(h);
        h = conv3d(h, W(p + ".down.weight"), W(p + ".down.bias"), 2, 1);
    }
    h = res_block_fwd(ctx, "enc4.res1", h, c[3], c[3]);
    h = res_block_fwd(ctx, "enc4.res2", h, c[3], c[3]);
    Tensor skip4 = h;

    h = res_block_fwd(ctx, "mid.res1", h, c[3], c[3]);
    h = attn_fwd("mid.attn", h);
    h = cross_attention(h, emb, heads, W("mid.xattn.q.weight"), W("mid.xattn.k.weight"),
                        W("mid.xattn.v.weight"), W("mid.xattn.out.weight"),
                        W("mid.xattn.out.bias"), xattn_bypass);
    h = res_block_fwd(ctx, "mid.res2", h, c[3], c[3]);

    h = concat(h, skip4, 1);
    h = res_block_fwd(ctx, "dec4.res1", h, 2 * c[3], c[3]);
    h = res_block_fwd(ctx, "dec4.res2", h, c[3], c[3]);
    h = conv3d(upsample_nearest2(h), W("dec4.up.weight"), W("dec4.up.bias"), 1, 1);

    for (int lvl = 2; lvl >= 0; --lvl) {
        const std::string p = "dec" + std::to_string(lvl + 1);
        h = concat(h, skips[size_t(lvl)], 1);
        h = res_block_fwd(ctx, p + ".res1", h, 2 * c[lvl], c[lvl]);
        h = res_block_fwd(ctx, p + ".res2", h, c[lvl], c[lvl]);
        h = attn_fwd(p + ".attn", h);
        if (lvl > 0)
            h = conv3d(upsample_nearest2(h), W(p + ".up.weight"), W(p + ".up.bias"), 1, 1);
    }

    h = group_norm(h, cfg.groupnorm_groups, W("head.gn.gamma"), W("head.gn.beta"));
    h = silu(h);
    return conv3d(h, W("head.conv.weight"), W("head.conv.bias"), 1, 1);
}

void save_weights(const ModelWeights& w, const ModelConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory " + dir + ": " + ec.message());

    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["dtype"] = "float32";
    manifest["byte_order"] = "little";
    manifest["model"] = nlohmann::json::parse(cfg.to_json());
    auto& params = manifest["params"] = nlohmann::json::array();
    for (size_t i = 0; i < w.count(); ++i) {
        nlohmann::json p;
        p["name"] = w.names[i];
        p["shape"] = w.tensors[i].shape();
        params.push_back(std::move(p));
    }
    {
        std::ofstream out(dir + "/manifest.json", std::ios::trunc);
        if (!out) throw io_error("cannot write " + dir + "/manifest.json");
        out << manifest.dump(2) << "\n";
    }
    {
        std::ofstream out(dir + "/weights.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write " + dir + "/weights.bin");
        for (const Tensor& t : w.tensors)
            out.write(reinterpret_cast<const char*>(t.data().data()),
                      std::streamsize(t.data().size() * sizeof(float)));
        if (!out) throw io_error("write failed for " + dir + "/weights.bin");
    }
}

std::pair<ModelWeights, ModelConfig> load_weights(const std::string& dir) {
    nlohmann::json manifest;
    {
        std::ifstream in(dir + "/manifest.json");
        if (!in) throw io_error("weights manifest not found: " + dir + "/manifest.json");
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw io_error(dir + "/manifest.json: invalid JSON: " + e.what());
        }
    }
    if (!manifest.contains("model") || !manifest.contains("params"))
        throw io_error(dir + "/manifest.json: missing model/params");
    ModelConfig cfg = ModelConfig::from_json(manifest["model"].dump());

    const auto expected = parameter_specs(cfg);
    const auto& params = manifest["params"];
    if (params.size() != expected.size())
        throw io_error(dir + ": manifest lists " + std::to_string(params.size()) +
                       " parameters, model config expects " + std::to_string(expected.size()));
    int64_t total = 0;
    for (size_t i = 0; i < expected.size(); ++i) {
        const std::string name = params[i]["name"].get<std::string>();
        const Shape shape = params[i]["shape"].get<Shape>();
        if (name != expected[i].name || shape != expected[i].shape)
            throw io_error(dir + ": parameter " + name + " with shape " + shape_str(shape) +
                           " does not match model config (expected " + expected[i].name + " " +
                           shape_str(expected[i].shape) + ")");
        total += shape_numel(shape);
    }

    std::ifstream blob(dir + "/weights.bin", std::ios::binary);
    if (!blob) throw io_error("weights blob not found: " + dir + "/weights.bin");
    blob.seekg(0, std::ios::end);
    const int64_t blob_bytes = blob.tellg();
    if (blob_bytes != total * int64_t(sizeof(float)))
        throw io_error(dir + "/weights.bin: expected " + std::to_string(total * sizeof(float)) +
                       " bytes, found " + std::to_string(blob_bytes));
    blob.seekg(0);

    ModelWeights w;
    for (const ParamSpec& spec : expected) {
        std::vector<float> data(static_cast<size_t>(shape_numel(spec.shape)));
        blob.read(reinterpret_cast<char*>(data.data()),
                  std::streamsize(data.size() * sizeof(float)));
        if (!blob) throw io_error(dir + "/weights.bin: short read");
        w.add(spec.name, Tensor::from_data(spec.shape, std::move(data), false));
    }
    return {std::move(w), cfg};
}

}  // namespace cryosamu
