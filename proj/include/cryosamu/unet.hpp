#ifndef CRYOSAMU_UNET_HPP
#define CRYOSAMU_UNET_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cryosamu/tensor.hpp"

namespace cryosamu {

struct ModelConfig {
    int64_t base_channels = 16;
    std::array<int64_t, 4> channel_multipliers = {1, 2, 4, 8};
    int64_t levels = 4;
    int64_t attn_heads = 4;
    double dropout_p = 0.2;
    int64_t groupnorm_groups = 8;
    int64_t embed_dim = 512;
    int64_t embed_len = 800;
    int64_t cube_size = 64;

    std::array<int64_t, 4> channels() const {
        return {base_channels * channel_multipliers[0], base_channels * channel_multipliers[1],
                base_channels * channel_multipliers[2], base_channels * channel_multipliers[3]};
    }

    void validate() const;
    static ModelConfig toy();  // base 8, 16^3 cubes

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

/// Ordered named-parameter store. Order is the canonical enumeration used
/// for initialization and the weight-blob layout.
struct ModelWeights {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    std::unordered_map<std::string, size_t> by_name;

    void add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return by_name.count(name) > 0; }
    size_t count() const { return tensors.size(); }
    int64_t parameter_count() const;

    void set_requires_grad(bool b);
    void zero_grad();
};

enum class RunMode { train, eval };

struct ParamSpec {
    std::string name;
    Shape shape;
    enum class Init { fan_in_uniform, zero, one } init;
};

/// Canonical parameter enumeration for a config (names, shapes, init).
std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg);

/// Seeded fan-in-uniform initialization; biases and the cross-attention
/// output projection start at zero, norm gains at one.
ModelWeights init_weights(const ModelConfig& cfg, uint64_t seed);

/// Structure-aware U-Net forward pass.
/// x: (B, 1, S, S, S) with S divisible by 8. Train mode applies dropout
/// (seeded) and requires emb (B, embed_len, embed_dim) unless bypass is
/// set; eval mode is deterministic and always bypasses cross-attention.
Tensor unet_forward(const Tensor& x, const std::optional<Tensor>& emb, const ModelConfig& cfg,
                    ModelWeights& weights, RunMode mode, uint64_t dropout_seed = 0,
                    bool bypass = false);

/// Standalone blocks, exposed for unit tests.
Tensor linear_self_attention(const Tensor& x, int64_t heads, const Tensor& w_qkv,
                             const Tensor& w_out, const Tensor& b_out);
Tensor cross_attention(const Tensor& x, const std::optional<Tensor>& emb, int64_t heads,
                       const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                       const Tensor& w_out, const Tensor& b_out, bool bypass);

/// Weight directory: manifest.json (model config + ordered param table) and
/// weights.bin (concatenated little-endian float32). Round-trips bit-exact.
void save_weights(const ModelWeights& w, const ModelConfig& cfg, const std::string& dir);
std::pair<ModelWeights, ModelConfig> load_weights(const std::string& dir);

}  // namespace cryosamu

#endif
