#include "fedkbp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "fedkbp/rng.hpp"

namespace fedkbp {

namespace {

constexpr std::uint64_t kInitStreamTag = 0x171Du;

std::size_t vidx(const Dims3& d, int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(d.nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(d.ny) * static_cast<std::size_t>(z));
}

// Parameter offsets into the flat vector, in manifest order.
struct Layout {
    int C = 0, F = 0, S = 0;
    std::size_t stem_w = 0, stem_b = 0;
    std::vector<std::size_t> scale_w, scale_b;
    std::size_t attn_w = 0, attn_b = 0, head_w = 0, head_b = 0;
    std::size_t total = 0;

    static Layout make(const ModelConfig& cfg) {
        cfg.validate();
        Layout l;
        l.C = cfg.in_channels;
        l.F = cfg.base_width;
        l.S = cfg.n_scales;
        std::size_t off = 0;
        auto take = [&off](std::size_t n) {
            const std::size_t at = off;
            off += n;
            return at;
        };
        const auto C = static_cast<std::size_t>(l.C);
        const auto F = static_cast<std::size_t>(l.F);
        l.stem_w = take(F * C * 27);
        l.stem_b = take(F);
        l.scale_w.resize(static_cast<std::size_t>(l.S));
        l.scale_b.resize(static_cast<std::size_t>(l.S));
        for (int s = 0; s < l.S; ++s) {
            l.scale_w[static_cast<std::size_t>(s)] = take(F * F * 27);
            l.scale_b[static_cast<std::size_t>(s)] = take(F);
        }
        l.attn_w = take(static_cast<std::size_t>(l.S));
        l.attn_b = take(static_cast<std::size_t>(l.S));
        l.head_w = take(F);
        l.head_b = take(1);
        l.total = off;
        return l;
    }
};

// 3x3x3 convolution, stride 1, zero padding 1. Per-tap shifted-slab loops
// keep the innermost loop contiguous.
void conv3_forward(const double* in, int C, const Dims3& d, const double* w, const double* b,
                   double* out, int F) {
    const std::size_t N = d.total();
    for (int f = 0; f < F; ++f)
        std::fill(out + static_cast<std::size_t>(f) * N, out + (static_cast<std::size_t>(f) + 1) * N,
                  b[f]);
    for (int f = 0; f < F; ++f) {
        double* dst_ch = out + static_cast<std::size_t>(f) * N;
        for (int c = 0; c < C; ++c) {
            const double* wfc = w + (static_cast<std::size_t>(f) * static_cast<std::size_t>(C) +
                                     static_cast<std::size_t>(c)) *
                                        27;
            const double* src_ch = in + static_cast<std::size_t>(c) * N;
            int tap = 0;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx, ++tap) {
                        const double wv = wfc[tap];
                        const int x0 = std::max(0, -dx), x1 = d.nx - 1 - std::max(0, dx);
                        const int y0 = std::max(0, -dy), y1 = d.ny - 1 - std::max(0, dy);
                        const int z0 = std::max(0, -dz), z1 = d.nz - 1 - std::max(0, dz);
                        if (x1 < x0 || y1 < y0 || z1 < z0) continue;
                        const int len = x1 - x0 + 1;
                        for (int z = z0; z <= z1; ++z)
                            for (int y = y0; y <= y1; ++y) {
                                const double* s = src_ch + vidx(d, x0 + dx, y + dy, z + dz);
                                double* o = dst_ch + vidx(d, x0, y, z);
                                for (int i = 0; i < len; ++i) o[i] += wv * s[i];
                            }
                    }
        }
    }
}

// Gradients of conv3_forward. dw/db are accumulated; din (when non-null)
// is accumulated as well and must be zeroed by the caller.
void conv3_backward(const double* in, int C, const Dims3& d, const double* w, const double* dout,
                    int F, double* dw, double* db, double* din) {
    const std::size_t N = d.total();
    for (int f = 0; f < F; ++f) {
        const double* g = dout + static_cast<std::size_t>(f) * N;
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) acc += g[i];
        db[f] += acc;
    }
    for (int f = 0; f < F; ++f) {
        const double* g_ch = dout + static_cast<std::size_t>(f) * N;
        for (int c = 0; c < C; ++c) {
            const std::size_t wbase = (static_cast<std::size_t>(f) * static_cast<std::size_t>(C) +
                                       static_cast<std::size_t>(c)) *
                                      27;
            const double* src_ch = in + static_cast<std::size_t>(c) * N;
            double* din_ch = din ? din + static_cast<std::size_t>(c) * N : nullptr;
            int tap = 0;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx, ++tap) {
                        const int x0 = std::max(0, -dx), x1 = d.nx - 1 - std::max(0, dx);
                        const int y0 = std::max(0, -dy), y1 = d.ny - 1 - std::max(0, dy);
                        const int z0 = std::max(0, -dz), z1 = d.nz - 1 - std::max(0, dz);
                        if (x1 < x0 || y1 < y0 || z1 < z0) continue;
                        const int len = x1 - x0 + 1;
                        double acc = 0.0;
                        const double wv = w[wbase + static_cast<std::size_t>(tap)];
                        for (int z = z0; z <= z1; ++z)
                            for (int y = y0; y <= y1; ++y) {
                                const double* s = src_ch + vidx(d, x0 + dx, y + dy, z + dz);
                                const double* g = g_ch + vidx(d, x0, y, z);
                                if (din_ch) {
                                    double* o = din_ch + vidx(d, x0 + dx, y + dy, z + dz);
                                    for (int i = 0; i < len; ++i) {
                                        acc += g[i] * s[i];
                                        o[i] += wv * g[i];
                                    }
                                } else {
                                    for (int i = 0; i < len; ++i) acc += g[i] * s[i];
                                }
                            }
                        dw[wbase + static_cast<std::size_t>(tap)] += acc;
                    }
        }
    }
}

Dims3 pooled_dims(const Dims3& d, int k) { return Dims3{d.nx / k, d.ny / k, d.nz / k}; }

// Non-overlapping k^3 average pooling.
void avgpool_forward(const double* in, int F, const Dims3& d, int k, double* out,
                     const Dims3& dp) {
    const std::size_t N = d.total();
    const std::size_t Np = dp.total();
    if (k == 1) {
        std::memcpy(out, in, sizeof(double) * N * static_cast<std::size_t>(F));
        return;
    }
    const double inv = 1.0 / (static_cast<double>(k) * k * k);
    for (int f = 0; f < F; ++f) {
        const double* src = in + static_cast<std::size_t>(f) * N;
        double* dst = out + static_cast<std::size_t>(f) * Np;
        for (int Z = 0; Z < dp.nz; ++Z)
            for (int Y = 0; Y < dp.ny; ++Y)
                for (int X = 0; X < dp.nx; ++X) {
                    double sum = 0.0;
                    for (int dz = 0; dz < k; ++dz)
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                sum += src[vidx(d, X * k + dx, Y * k + dy, Z * k + dz)];
                    dst[vidx(dp, X, Y, Z)] = sum * inv;
                }
    }
}

void avgpool_backward(double* din, int F, const Dims3& d, int k, const double* dout,
                      const Dims3& dp) {
    const std::size_t N = d.total();
    const std::size_t Np = dp.total();
    if (k == 1) {
        for (std::size_t i = 0; i < N * static_cast<std::size_t>(F); ++i) din[i] += dout[i];
        return;
    }
    const double inv = 1.0 / (static_cast<double>(k) * k * k);
    for (int f = 0; f < F; ++f) {
        double* dst = din + static_cast<std::size_t>(f) * N;
        const double* g = dout + static_cast<std::size_t>(f) * Np;
        for (int Z = 0; Z < dp.nz; ++Z)
            for (int Y = 0; Y < dp.ny; ++Y)
                for (int X = 0; X < dp.nx; ++X) {
                    const double gv = g[vidx(dp, X, Y, Z)] * inv;
                    for (int dz = 0; dz < k; ++dz)
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx)
                                dst[vidx(d, X * k + dx, Y * k + dy, Z * k + dz)] += gv;
                }
    }
}

struct FwdCache {
    Dims3 dims;
    std::vector<double> input;     // C*N
    std::vector<double> stem_pre;  // F*N
    std::vector<double> stem_act;  // F*N
    struct Scale {
        Dims3 dims;
        int k = 1;
        std::vector<double> pooled;  // F*Ns
        std::vector<double> pre;     // F*Ns
        std::vector<double> feat;    // F*Ns
        double gap = 0.0;
    };
    std::vector<Scale> scales;
    std::vector<double> logits;  // S
    std::vector<double> gates;   // S
    std::vector<double> fused;   // F*N
    std::vector<double> yhat;    // N
    double min_abs_relu_pre = std::numeric_limits<double>::infinity();
};

void check_dims_divisible(const Dims3& d, int S) {
    const int k = 1 << (S - 1);
    if (d.nx % k != 0 || d.ny % k != 0 || d.nz % k != 0) {
        throw ConfigError("grid dims " + std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" +
                          std::to_string(d.nz) + " not divisible by 2^(n_scales-1)=" +
                          std::to_string(k));
    }
}

void forward_raw(const Layout& l, const double* p, const float* input, const Dims3& d,
                 FwdCache& cache) {
    check_dims_divisible(d, l.S);
    const std::size_t N = d.total();
    const auto C = static_cast<std::size_t>(l.C);
    const auto F = static_cast<std::size_t>(l.F);

    cache.dims = d;
    cache.input.resize(C * N);
    for (std::size_t i = 0; i < C * N; ++i) cache.input[i] = static_cast<double>(input[i]);

    cache.stem_pre.resize(F * N);
    cache.stem_act.resize(F * N);
    conv3_forward(cache.input.data(), l.C, d, p + l.stem_w, p + l.stem_b, cache.stem_pre.data(),
                  l.F);
    double min_pre = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < F * N; ++i) {
        const double v = cache.stem_pre[i];
        min_pre = std::min(min_pre, std::abs(v));
        cache.stem_act[i] = v > 0.0 ? v : 0.0;
    }

    cache.scales.resize(static_cast<std::size_t>(l.S));
    for (int s = 0; s < l.S; ++s) {
        auto& sc = cache.scales[static_cast<std::size_t>(s)];
        sc.k = 1 << s;
        sc.dims = pooled_dims(d, sc.k);
        const std::size_t Ns = sc.dims.total();
        sc.pooled.resize(F * Ns);
        sc.pre.resize(F * Ns);
        sc.feat.resize(F * Ns);
        avgpool_forward(cache.stem_act.data(), l.F, d, sc.k, sc.pooled.data(), sc.dims);
        conv3_forward(sc.pooled.data(), l.F, sc.dims, p + l.scale_w[static_cast<std::size_t>(s)],
                      p + l.scale_b[static_cast<std::size_t>(s)], sc.pre.data(), l.F);
        double gap = 0.0;
        for (std::size_t i = 0; i < F * Ns; ++i) {
            const double v = sc.pre[i];
            min_pre = std::min(min_pre, std::abs(v));
            const double a = v > 0.0 ? v : 0.0;
            sc.feat[i] = a;
            gap += a;
        }
        sc.gap = gap / (static_cast<double>(F) * static_cast<double>(Ns));
    }
    cache.min_abs_relu_pre = min_pre;

    // Scale attention: scalar gate per scale from the global average of its
    // feature map, softmax-normalized.
    cache.logits.assign(static_cast<std::size_t>(l.S), 0.0);
    cache.gates.assign(static_cast<std::size_t>(l.S), 0.0);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < l.S; ++s) {
        const double logit = p[l.attn_w + static_cast<std::size_t>(s)] *
                                 cache.scales[static_cast<std::size_t>(s)].gap +
                             p[l.attn_b + static_cast<std::size_t>(s)];
        cache.logits[static_cast<std::size_t>(s)] = logit;
        max_logit = std::max(max_logit, logit);
    }
    double denom = 0.0;
    for (int s = 0; s < l.S; ++s) {
        const double e = std::exp(cache.logits[static_cast<std::size_t>(s)] - max_logit);
        cache.gates[static_cast<std::size_t>(s)] = e;
        denom += e;
    }
    for (int s = 0; s < l.S; ++s) cache.gates[static_cast<std::size_t>(s)] /= denom;

    // Fused map: gate-weighted sum of nearest-neighbour upsampled features.
    cache.fused.assign(F * N, 0.0);
    for (int s = 0; s < l.S; ++s) {
        const auto& sc = cache.scales[static_cast<std::size_t>(s)];
        const double g = cache.gates[static_cast<std::size_t>(s)];
        for (int f = 0; f < l.F; ++f) {
            const double* src = sc.feat.data() + static_cast<std::size_t>(f) * sc.dims.total();
            double* dst = cache.fused.data() + static_cast<std::size_t>(f) * N;
            for (int z = 0; z < d.nz; ++z)
                for (int y = 0; y < d.ny; ++y) {
                    const std::size_t src_row = vidx(sc.dims, 0, y / sc.k, z / sc.k);
                    double* o = dst + vidx(d, 0, y, z);
                    for (int x = 0; x < d.nx; ++x) o[x] += g * src[src_row + static_cast<std::size_t>(x / sc.k)];
                }
        }
    }

    // 1x1x1 head.
    cache.yhat.assign(N, p[l.head_b]);
    for (int f = 0; f < l.F; ++f) {
        const double wv = p[l.head_w + static_cast<std::size_t>(f)];
        const double* src = cache.fused.data() + static_cast<std::size_t>(f) * N;
        for (std::size_t i = 0; i < N; ++i) cache.yhat[i] += wv * src[i];
    }
}

// Masked MAE of cached yhat vs the case dose; returns per-case loss and, when
// grad_yhat is non-null, writes d(loss)/d(yhat) scaled by `scale`.
double masked_mae_from_cache(const FwdCache& cache, const Case& c, double scale,
                             std::vector<double>* grad_yhat, double* min_abs_residual) {
    const std::size_t N = cache.dims.total();
    std::size_t m = 0;
    for (float v : c.possible_dose_mask.values)
        if (v != 0.0f) ++m;
    if (m == 0) throw EvalError("case " + c.id + ": possible_dose_mask is empty");

    if (grad_yhat) grad_yhat->assign(N, 0.0);
    double loss = 0.0;
    double min_r = std::numeric_limits<double>::infinity();
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < N; ++i) {
        if (c.possible_dose_mask.values[i] == 0.0f) continue;
        const double r = cache.yhat[i] - static_cast<double>(c.dose.values[i]);
        loss += std::abs(r);
        min_r = std::min(min_r, std::abs(r));
        if (grad_yhat) {
            // Subgradient at zero residual is 0.
            const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            (*grad_yhat)[i] = sign * inv_m * scale;
        }
    }
    if (min_abs_residual) *min_abs_residual = min_r;
    return loss * inv_m;
}

// Backpropagation through one cached forward pass; accumulates into grad.
void backward_from_cache(const Layout& l, const double* p, const FwdCache& cache,
                         const std::vector<double>& dyhat, double* grad) {
    const Dims3& d = cache.dims;
    const std::size_t N = d.total();
    const auto F = static_cast<std::size_t>(l.F);

    // Head.
    std::vector<double> dfused(F * N, 0.0);
    {
        double dbh = 0.0;
        for (std::size_t i = 0; i < N; ++i) dbh += dyhat[i];
        grad[l.head_b] += dbh;
        for (int f = 0; f < l.F; ++f) {
            const double* fused_ch = cache.fused.data() + static_cast<std::size_t>(f) * N;
            const double wv = p[l.head_w + static_cast<std::size_t>(f)];
            double* dfused_ch = dfused.data() + static_cast<std::size_t>(f) * N;
            double dw = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                dw += dyhat[i] * fused_ch[i];
                dfused_ch[i] = wv * dyhat[i];
            }
            grad[l.head_w + static_cast<std::size_t>(f)] += dw;
        }
    }

    // Fusion: gate grads plus the upsample adjoint into each scale's features.
    std::vector<double> dgate(static_cast<std::size_t>(l.S), 0.0);
    std::vector<std::vector<double>> dfeat(static_cast<std::size_t>(l.S));
    for (int s = 0; s < l.S; ++s) {
        const auto& sc = cache.scales[static_cast<std::size_t>(s)];
        const std::size_t Ns = sc.dims.total();
        auto& df = dfeat[static_cast<std::size_t>(s)];
        df.assign(F * Ns, 0.0);
        const double g = cache.gates[static_cast<std::size_t>(s)];
        double dg = 0.0;
        for (int f = 0; f < l.F; ++f) {
            const double* feat_ch = sc.feat.data() + static_cast<std::size_t>(f) * Ns;
            const double* dfused_ch = dfused.data() + static_cast<std::size_t>(f) * N;
            double* df_ch = df.data() + static_cast<std::size_t>(f) * Ns;
            for (int z = 0; z < d.nz; ++z)
                for (int y = 0; y < d.ny; ++y) {
                    const std::size_t src_row = vidx(sc.dims, 0, y / sc.k, z / sc.k);
                    const double* gv = dfused_ch + vidx(d, 0, y, z);
                    for (int x = 0; x < d.nx; ++x) {
                        const std::size_t si = src_row + static_cast<std::size_t>(x / sc.k);
                        dg += gv[x] * feat_ch[si];
                        df_ch[si] += g * gv[x];
                    }
                }
        }
        dgate[static_cast<std::size_t>(s)] = dg;
    }

    // Softmax backward, then the gate-logit parameters and the GAP adjoint.
    double dot = 0.0;
    for (int s = 0; s < l.S; ++s)
        dot += cache.gates[static_cast<std::size_t>(s)] * dgate[static_cast<std::size_t>(s)];
    for (int s = 0; s < l.S; ++s) {
        const auto si = static_cast<std::size_t>(s);
        const double dlogit = cache.gates[si] * (dgate[si] - dot);
        grad[l.attn_w + si] += dlogit * cache.scales[si].gap;
        grad[l.attn_b + si] += dlogit;
        const double dgap = dlogit * p[l.attn_w + si];
        const std::size_t Ns = cache.scales[si].dims.total();
        const double spread = dgap / (static_cast<double>(F) * static_cast<double>(Ns));
        auto& df = dfeat[si];
        for (std::size_t i = 0; i < F * Ns; ++i) df[i] += spread;
    }

    // Per-scale conv + ReLU + pooling adjoints, accumulated into the stem.
    std::vector<double> dstem_act(F * N, 0.0);
    for (int s = 0; s < l.S; ++s) {
        const auto si = static_cast<std::size_t>(s);
        const auto& sc = cache.scales[si];
        const std::size_t Ns = sc.dims.total();
        auto& df = dfeat[si];
        for (std::size_t i = 0; i < F * Ns; ++i)
            if (sc.pre[i] <= 0.0) df[i] = 0.0;  // ReLU' at 0 := 0
        std::vector<double> dpooled(F * Ns, 0.0);
        conv3_backward(sc.pooled.data(), l.F, sc.dims, p + l.scale_w[si], df.data(), l.F,
                       grad + l.scale_w[si], grad + l.scale_b[si], dpooled.data());
        avgpool_backward(dstem_act.data(), l.F, d, sc.k, dpooled.data(), sc.dims);
    }

    for (std::size_t i = 0; i < F * N; ++i)
        if (cache.stem_pre[i] <= 0.0) dstem_act[i] = 0.0;
    conv3_backward(cache.input.data(), l.C, d, p + l.stem_w, dstem_act.data(), l.F,
                   grad + l.stem_w, grad + l.stem_b, nullptr);
}

void check_batch(const std::vector<const Case*>& batch) {
    if (batch.empty()) throw ConfigError("backward requires a non-empty batch");
    for (const Case* c : batch)
        if (c == nullptr) throw ConfigError("backward batch contains a null case");
}

ModelInput input_for_case(const Case& c) { return stack_case_input(c); }

}  // namespace

void ModelConfig::validate() const {
    if (in_channels < 1) throw ConfigError("model in_channels must be >= 1");
    if (base_width < 1) throw ConfigError("model base_width must be >= 1");
    if (n_scales < 2) throw ConfigError("model n_scales must be >= 2");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

std::vector<LayerSpec> model_manifest(const ModelConfig& cfg) {
    cfg.validate();
    const auto C = static_cast<std::int64_t>(cfg.in_channels);
    const auto F = static_cast<std::int64_t>(cfg.base_width);
    const auto S = static_cast<std::int64_t>(cfg.n_scales);
    std::vector<LayerSpec> manifest;
    manifest.push_back({"stem.w", {F, C, 3, 3, 3}});
    manifest.push_back({"stem.b", {F}});
    for (int s = 0; s < cfg.n_scales; ++s) {
        manifest.push_back({"scale" + std::to_string(s) + ".w", {F, F, 3, 3, 3}});
        manifest.push_back({"scale" + std::to_string(s) + ".b", {F}});
    }
    manifest.push_back({"attn.w", {S}});
    manifest.push_back({"attn.b", {S}});
    manifest.push_back({"head.w", {1, F, 1, 1, 1}});
    manifest.push_back({"head.b", {1}});
    return manifest;
}

ParamVector init_params(const ModelConfig& cfg) {
    const auto manifest = model_manifest(cfg);
    Rng rng = Rng::stream(cfg.seed, {kInitStreamTag});
    std::vector<float> data;
    const double F27 = cfg.base_width * 27.0;
    for (const auto& layer : manifest) {
        const auto n = static_cast<std::size_t>(layer.count());
        if (layer.name.ends_with(".b")) {
            data.insert(data.end(), n, 0.0f);
            continue;
        }
        double fan_in = 0.0, fan_out = 0.0;
        if (layer.name == "stem.w") {
            fan_in = cfg.in_channels * 27.0;
            fan_out = F27;
        } else if (layer.name == "attn.w") {
            fan_in = 1.0;
            fan_out = 1.0;
        } else if (layer.name == "head.w") {
            fan_in = cfg.base_width;
            fan_out = 1.0;
        } else {
            fan_in = F27;  // scale<k>.w
            fan_out = F27;
        }
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < n; ++i)
            data.push_back(static_cast<float>(rng.uniform(-a, a)));
    }
    return ParamVector(manifest, std::move(data));
}

ModelInput stack_case_input(const Case& c) {
    const Dims3 d = c.ct.dims;
    const std::size_t N = d.total();
    ModelInput input;
    input.dims = d;
    input.spacing_mm = c.ct.spacing_mm;
    input.channels = 1 + kNumRois;
    input.data.assign(static_cast<std::size_t>(input.channels) * N, 0.0f);

    std::copy(c.ct.values.begin(), c.ct.values.end(), input.data.begin());
    const auto& catalog = roi_catalog();
    for (int r = 0; r < kNumRois; ++r) {
        const auto it = c.roi_masks.find(catalog[static_cast<std::size_t>(r)].name);
        if (it == c.roi_masks.end()) continue;  // absent ROI: zero channel
        std::copy(it->second.values.begin(), it->second.values.end(),
                  input.data.begin() + static_cast<std::size_t>(r + 1) * N);
    }
    return input;
}

namespace detail {

std::vector<double> raw_params(const ParamVector& params) {
    std::vector<double> raw(params.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<double>(params.data[i]);
    return raw;
}

double loss_for_raw_params(const ModelConfig& cfg, std::span<const double> raw,
                           const std::vector<const Case*>& batch, KinkStats* stats) {
    check_batch(batch);
    const Layout l = Layout::make(cfg);
    if (raw.size() != l.total)
        throw StructuralError("raw parameter vector has wrong length");
    FwdCache cache;
    double loss = 0.0;
    for (const Case* c : batch) {
        const ModelInput input = input_for_case(*c);
        if (input.channels != cfg.in_channels)
            throw ConfigError("case channel count does not match model config");
        forward_raw(l, raw.data(), input.data.data(), input.dims, cache);
        double min_r = 0.0;
        loss += masked_mae_from_cache(cache, *c, 1.0, nullptr, &min_r);
        if (stats) {
            stats->min_abs_relu_pre = std::min(stats->min_abs_relu_pre, cache.min_abs_relu_pre);
            stats->min_abs_residual = std::min(stats->min_abs_residual, min_r);
        }
    }
    return loss / static_cast<double>(batch.size());
}

void backward_raw(const ModelConfig& cfg, std::span<const double> raw,
                  const std::vector<const Case*>& batch, std::vector<double>& grad_out,
                  double& loss_out) {
    check_batch(batch);
    const Layout l = Layout::make(cfg);
    if (raw.size() != l.total)
        throw StructuralError("raw parameter vector has wrong length");
    grad_out.assign(l.total, 0.0);
    FwdCache cache;
    std::vector<double> dyhat;
    double loss = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const Case* c : batch) {
        const ModelInput input = input_for_case(*c);
        if (input.channels != cfg.in_channels)
            throw ConfigError("case channel count does not match model config");
        forward_raw(l, raw.data(), input.data.data(), input.dims, cache);
        loss += masked_mae_from_cache(cache, *c, inv_batch, &dyhat, nullptr);
        backward_from_cache(l, raw.data(), cache, dyhat, grad_out.data());
    }
    loss_out = loss * inv_batch;
}

std::vector<double> attention_gates(const ModelConfig& cfg, const ParamVector& params,
                                    const ModelInput& input) {
    const Layout l = Layout::make(cfg);
    const auto raw = raw_params(params);
    if (raw.size() != l.total) throw StructuralError("params do not match model config");
    if (input.channels != cfg.in_channels)
        throw ConfigError("input channel count does not match model config");
    FwdCache cache;
    forward_raw(l, raw.data(), input.data.data(), input.dims, cache);
    return cache.gates;
}

}  // namespace detail

VoxelGrid forward(const ModelConfig& cfg, const ParamVector& params, const ModelInput& input) {
    const Layout l = Layout::make(cfg);
    if (params.manifest != model_manifest(cfg))
        throw StructuralError("params manifest does not match model config");
    if (input.channels != cfg.in_channels)
        throw ConfigError("input channel count " + std::to_string(input.channels) +
                          " does not match model in_channels " + std::to_string(cfg.in_channels));
    const auto raw = detail::raw_params(params);
    FwdCache cache;
    forward_raw(l, raw.data(), input.data.data(), input.dims, cache);
    std::vector<float> out(cache.yhat.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(cache.yhat[i]);
    return VoxelGrid(input.dims, input.spacing_mm, std::move(out));
}

VoxelGrid clamp_nonnegative(VoxelGrid pred) {
    for (auto& v : pred.values) v = std::max(v, 0.0f);
    return pred;
}

double mae_loss(const VoxelGrid& pred, const VoxelGrid& truth, const VoxelGrid& mask) {
    if (!(pred.dims == truth.dims) || !(pred.dims == mask.dims))
        throw EvalError("mae_loss grids must share dims");
    double sum = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        const float mv = mask.values[i];
        if (mv == 0.0f) continue;
        if (mv != 1.0f) throw EvalError("mae_loss mask is not binary");
        sum += std::abs(static_cast<double>(pred.values[i]) - static_cast<double>(truth.values[i]));
        ++m;
    }
    if (m == 0) throw EvalError("mae_loss mask is empty");
    return sum / static_cast<double>(m);
}

BackwardResult backward(const ModelConfig& cfg, const ParamVector& params,
                        const std::vector<const Case*>& batch) {
    if (params.manifest != model_manifest(cfg))
        throw StructuralError("params manifest does not match model config");
    const auto raw = detail::raw_params(params);
    std::vector<double> grad;
    double loss = 0.0;
    detail::backward_raw(cfg, raw, batch, grad, loss);
    std::vector<float> grad_f(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad_f[i] = static_cast<float>(grad[i]);
    return BackwardResult{ParamVector(params.manifest, std::move(grad_f)), loss};
}

std::pair<ParamVector, ParamVector> sgd_step(const ParamVector& params, const ParamVector& grad,
                                             const ParamVector& velocity, const TrainConfig& tc) {
    ParamVector::require_same_manifest(params, grad, "sgd_step(params, grad)");
    ParamVector::require_same_manifest(params, velocity, "sgd_step(params, velocity)");
    std::vector<float> new_params(params.data.size());
    std::vector<float> new_velocity(params.data.size());
    for (std::size_t i = 0; i < params.data.size(); ++i) {
        const double v = tc.momentum * static_cast<double>(velocity.data[i]) +
                         static_cast<double>(grad.data[i]);
        new_velocity[i] = static_cast<float>(v);
        new_params[i] =
            static_cast<float>(static_cast<double>(params.data[i]) - tc.learning_rate * v);
    }
    return {ParamVector(params.manifest, std::move(new_params)),
            ParamVector(params.manifest, std::move(new_velocity))};
}

}  // namespace fedkbp
