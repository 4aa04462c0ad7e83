#include "presspose/model.hpp"

#include "presspose/common.hpp"

namespace presspose {

void PoseModel::build(const ModelConfig& m) {
    // Geometry must hold; skeleton/joint agreement is checked against the
    // dataset at train time, not here.
    ValidationReport rep = validate_config(m, TrainConfig{}, default_skeleton());
    for (const auto& is : rep.issues)
        if (is.field.rfind("skeleton", 0) != 0 && is.field != "num_joints")
            fail(ErrorKind::BadArgument,
                 "invalid model config: " + is.field + ": " + is.message);
    cfg = m;
    tok.init(ps, "tok", m);
    enc.init(ps, "enc", m.embed_dim, m.encoder_depth, m.num_heads, m.ffn_ratio);
    head.init(ps, "head", m);
    dec.init(ps, "dec", m);
}

void PoseModel::encode_window(const float* window, TrunkCache& tc) const {
    const size_t cells = size_t(cfg.frames_t) * cfg.grid_h * cfg.grid_w;
    tc.x.resize(cells);
    for (size_t i = 0; i < cells; ++i) tc.x[i] = double(window[i]);

    const size_t n = size_t(cfg.token_count());
    tc.tokens.assign(n * cfg.embed_dim, 0.0);
    tok.forward(ps, tc.x.data(), tc.tokens.data(), tc.tokc);
    tc.encoded.assign(n * cfg.embed_dim, 0.0);
    enc.forward(ps, tc.tokens.data(), int(n), tc.encoded.data(), tc.encc);
}

void PoseModel::trunk_backward(const TrunkCache& tc, const double* g_encoded,
                               GradBuffer& grads) const {
    std::vector<double> g_tokens(tc.tokens.size(), 0.0);
    enc.backward(ps, cfg.token_count(), tc.encc, g_encoded, grads, g_tokens.data());
    tok.backward(ps, tc.tokc, g_tokens.data(), grads, nullptr);
}

void PoseModel::sup_forward(const float* window, HeatmapStack& maps,
                            SupCache& cache) const {
    encode_window(window, cache.trunk);
    head.forward(ps, cache.trunk.encoded.data(), maps, cache.headc);
}

void PoseModel::sup_backward(const SupCache& cache, const HeatmapStack& g_maps,
                             GradBuffer& grads) const {
    std::vector<double> g_encoded(cache.trunk.encoded.size(), 0.0);
    head.backward(ps, cache.headc, g_maps, grads, g_encoded.data());
    trunk_backward(cache.trunk, g_encoded.data(), grads);
}

double PoseModel::mae_forward(const float* window, const MaskSpec& mask,
                              MaeCache& cache) const {
    encode_window(window, cache.trunk);
    cache.mask = mask;

    const size_t n = size_t(cfg.token_count());
    const size_t cube = size_t(cfg.cube_size());
    cache.targets.assign(n * cube, 0.0);
    tok.extract_cube_targets(cache.trunk.x.data(), cache.targets.data());

    cache.pred.assign(n * cube, 0.0);
    dec.forward(ps, cache.trunk.encoded.data(), mask, cache.pred.data(), cache.decc);
    return masked_recon_loss(cache.pred.data(), cache.targets.data(), int(n),
                             int(cube), mask);
}

void PoseModel::mae_backward(const MaeCache& cache, GradBuffer& grads) const {
    const int n = cfg.token_count();
    const int cube = cfg.cube_size();
    std::vector<double> g_pred(cache.pred.size());
    masked_recon_loss_grad(cache.pred.data(), cache.targets.data(), n, cube,
                           cache.mask, g_pred.data());
    std::vector<double> g_encoded(cache.trunk.encoded.size(), 0.0);
    dec.backward(ps, cache.decc, g_pred.data(), grads, g_encoded.data());
    trunk_backward(cache.trunk, g_encoded.data(), grads);
}

}  // namespace presspose
