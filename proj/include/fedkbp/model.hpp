#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "fedkbp/case.hpp"
#include "fedkbp/param_vector.hpp"
#include "fedkbp/voxel_grid.hpp"

namespace fedkbp {

// Small 3D dose-prediction network: conv stem, per-scale conv features over
// average-pooled copies, softmax-gated fusion of the upsampled scales, and a
// 1x1x1 head. Fully defined here so gradients are finite-difference checkable.
struct ModelConfig {
    int in_channels = 11;  // 1 CT + 7 OAR + 3 target channels
    int base_width = 8;    // F
    int n_scales = 2;      // S
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 1;
    int epochs = 100;

    void validate() const;
};

// Layer manifest in fixed architectural order:
// stem.w, stem.b, scale<k>.w, scale<k>.b (k ascending), attn.w, attn.b,
// head.w, head.b.
std::vector<LayerSpec> model_manifest(const ModelConfig& cfg);

// Glorot-uniform weights, zero biases, deterministic per cfg.seed.
ParamVector init_params(const ModelConfig& cfg);

// Stacked input channels in canonical order: CT, the 7 OAR masks (zero grid
// when a case lacks the ROI), then PTV70/PTV63/PTV56 masks.
struct ModelInput {
    Dims3 dims;
    Spacing3 spacing_mm;
    int channels = 0;
    std::vector<float> data;  // channel-major, x-fastest within a channel
};

ModelInput stack_case_input(const Case& c);

// Raw network output (no clamp). Requires dims divisible by 2^(n_scales-1).
VoxelGrid forward(const ModelConfig& cfg, const ParamVector& params, const ModelInput& input);

// Evaluation-time non-negativity clamp; kept out of loss/gradient paths.
VoxelGrid clamp_nonnegative(VoxelGrid pred);

// Masked voxel-wise mean absolute error in Gy.
double mae_loss(const VoxelGrid& pred, const VoxelGrid& truth, const VoxelGrid& mask);

struct BackwardResult {
    ParamVector grad;
    double loss = 0.0;
};

// Batch-mean masked MAE and its gradient. The MAE subgradient at zero
// residual and the ReLU derivative at zero are both taken as 0.
BackwardResult backward(const ModelConfig& cfg, const ParamVector& params,
                        const std::vector<const Case*>& batch);

// SGD with momentum: v' = momentum*v + g; p' = p - lr*v'. 64-bit arithmetic,
// rounded once per element.
std::pair<ParamVector, ParamVector> sgd_step(const ParamVector& params, const ParamVector& grad,
                                             const ParamVector& velocity, const TrainConfig& tc);

namespace detail {

// 64-bit parameter path shared by backward() and the finite-difference
// checks, so perturbations are not quantized to 32 bits.
struct KinkStats {
    double min_abs_relu_pre = std::numeric_limits<double>::infinity();
    double min_abs_residual = std::numeric_limits<double>::infinity();
};

std::vector<double> raw_params(const ParamVector& params);

double loss_for_raw_params(const ModelConfig& cfg, std::span<const double> raw,
                           const std::vector<const Case*>& batch, KinkStats* stats = nullptr);

void backward_raw(const ModelConfig& cfg, std::span<const double> raw,
                  const std::vector<const Case*>& batch, std::vector<double>& grad_out,
                  double& loss_out);

// Attention gate values for one input (softmax over scale logits).
std::vector<double> attention_gates(const ModelConfig& cfg, const ParamVector& params,
                                    const ModelInput& input);

}  // namespace detail

}  // namespace fedkbp
