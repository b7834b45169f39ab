#ifndef CRYOSAMU_OPTIM_HPP
#define CRYOSAMU_OPTIM_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "cryosamu/unet.hpp"

namespace cryosamu {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;  // decoupled
    double clip = 0.5;           // global gradient norm
};

struct AdamWState {
    int64_t step = 0;
    std::vector<std::vector<float>> m, v;  // first/second moments per parameter

    void init_for(const ModelWeights& w);
};

/// lr(t) = lr_min + 0.5 (lr0 - lr_min) (1 + cos(pi t / total)).
struct CosineSchedule {
    double lr0 = 1e-4;
    int64_t total_steps = 1;
    double lr_min = 0.0;

    double at(int64_t step) const;
};

/// Scales all parameter gradients so the global L2 norm is at most
/// max_norm; returns the pre-clip norm.
double clip_global_norm(ModelWeights& w, double max_norm);

void adamw_update(ModelWeights& w, AdamWState& state, const AdamWConfig& cfg, double lr);

struct TrainStepResult {
    double loss = 0;
    double grad_norm = 0;  // pre-clip
    double lr = 0;
};

/// One optimization step: forward (train mode), smooth L1, backward,
/// global-norm clip, AdamW update. Aborts with a diagnostic on NaN loss.
TrainStepResult train_step(const Tensor& inputs, const Tensor& targets,
                           const std::optional<Tensor>& emb, const ModelConfig& cfg,
                           ModelWeights& weights, AdamWState& state, const AdamWConfig& opt,
                           double lr, uint64_t dropout_seed);

}  // namespace cryosamu

#endif
