#include "cryosamu/optim.hpp"

#include <cmath>
#include <numbers>

namespace cryosamu {

void AdamWState::init_for(const ModelWeights& w) {
    step = 0;
    m.clear();
    v.clear();
    for (const Tensor& t : w.tensors) {
        m.emplace_back(size_t(t.numel()), 0.0f);
        v.emplace_back(size_t(t.numel()), 0.0f);
    }
}

double CosineSchedule::at(int64_t step) const {
    const double t = std::clamp(double(step) / double(total_steps), 0.0, 1.0);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

double clip_global_norm(ModelWeights& w, double max_norm) {
    double sq = 0.0;
    for (Tensor& t : w.tensors) {
        if (!t.requires_grad() || t.grad().empty()) continue;
        for (float g : t.grad()) sq += double(g) * double(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (Tensor& t : w.tensors) {
            if (!t.requires_grad() || t.grad().empty()) continue;
            for (float& g : t.grad()) g = float(g * scale);
        }
    }
    return norm;
}

void adamw_update(ModelWeights& w, AdamWState& state, const AdamWConfig& cfg, double lr) {
    if (state.m.size() != w.count()) state.init_for(w);
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));

    for (size_t pi = 0; pi < w.count(); ++pi) {
        Tensor& t = w.tensors[pi];
        if (!t.requires_grad() || t.grad().empty()) continue;
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        auto& val = t.data();
        const auto& g = t.grad();
        for (size_t i = 0; i < val.size(); ++i) {
            const double gi = g[i];
            m[i] = float(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi);
            v[i] = float(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            // Decoupled weight decay.
            val[i] = float(val[i] - lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                          cfg.weight_decay * val[i]));
        }
    }
}

TrainStepResult train_step(const Tensor& inputs, const Tensor& targets,
                           const std::optional<Tensor>& emb, const ModelConfig& cfg,
                           ModelWeights& weights, AdamWState& state, const AdamWConfig& opt,
                           double lr, uint64_t dropout_seed) {
    weights.set_requires_grad(true);
    weights.zero_grad();

    Tensor pred = unet_forward(inputs, emb, cfg, weights, RunMode::train, dropout_seed,
                               /*bypass=*/!emb.has_value());
    Tensor loss = smooth_l1(pred, targets);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value))
        throw numeric_error("train_step: loss is not finite at step " +
                            std::to_string(state.step + 1) + " (lr=" + std::to_string(lr) + ")");
    loss.backward();

    TrainStepResult res;
    res.loss = loss_value;
    res.grad_norm = clip_global_norm(weights, opt.clip);
    res.lr = lr;
    adamw_update(weights, state, opt, lr);
    return res;
}

}  // namespace cryosamu
