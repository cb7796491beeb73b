#pragma once

// Composite registration loss: patch-wise MSE similarity, displacement smoothness and
// weighted soft-Dice segmentation consistency summed over refinement steps, together
// with the analytic gradient with respect to one step's incremental field.

#include "segreg/field.hpp"
#include "segreg/grid.hpp"

#include <map>
#include <span>
#include <vector>

namespace segreg {

/// Structures that enter the consistency loss. Urethra is propagated and reported only.
inline constexpr std::array<Structure, 3> consistency_structures{Structure::bladder, Structure::rectum,
                                                                 Structure::ctv};

enum class SmoothReduction {
    sum,  // plain sum over voxels
    mean, // sum divided by the voxel count
    element_mean, // sum divided by 9 x voxel count: mean over voxels, components and axes
};

double smooth_divisor(SmoothReduction reduction, std::size_t voxels);

struct LossWeights {
    double lambda_smooth = 30.0;
    double lambda_cons = 5.0;
    std::map<Structure, double> structure_weights{
        {Structure::bladder, 0.40}, {Structure::rectum, 0.30}, {Structure::ctv, 0.30}};
    Dims patch{8, 8, 8};
    /// How the smoothness sum is reduced inside loss_total.
    SmoothReduction smooth_reduction = SmoothReduction::element_mean;

    /// Non-negative weights summing to 1 (+-1e-12), patch dims >= 1.
    void validate() const;
};

/// Per-structure occupancy in [0, 1].
struct SoftMask {
    GridGeometry geometry;
    std::map<Structure, std::vector<double>> channels;

    /// Throws std::invalid_argument naming the structure when it has no channel.
    const std::vector<double> &channel(Structure s) const;
};

/// One-hot encoding of the requested structures, optionally Gaussian-blurred
/// (sigma in voxels; 0 keeps the binary masks).
SoftMask make_soft_masks(const LabelVolume &labels, std::span<const Structure> structures,
                         double blur_sigma_voxels = 0.0);

/// Trilinear warp of every channel.
SoftMask warp_soft_masks(const SoftMask &masks, const DisplacementField &field);

double loss_similarity(const ScalarVolume &warped, const ScalarVolume &fixed, const Dims &patch);

/// Sum over voxels of squared forward differences of u per mm (the last slice along
/// each axis has no forward neighbour and contributes nothing on that axis).
double loss_smooth(const DisplacementField &field);
double loss_smooth(const DisplacementField &field, SmoothReduction reduction);

double soft_dsc(std::span<const double> pred, std::span<const double> target, double eps = 1e-6);

/// Weighted sum over structures of w_k * (1 - soft_dsc) for one step.
double step_consistency(const SoftMask &step, const SoftMask &fixed_masks, const LossWeights &weights);

/// Sum over steps and weighted structures of w_k * (1 - soft_dsc). Not averaged over steps.
double loss_consistency(std::span<const SoftMask> per_step_masks, const SoftMask &fixed_masks,
                        const LossWeights &weights);

struct LossBreakdown {
    double similarity = 0.0;
    double smooth = 0.0;      // already reduced per LossWeights::smooth_reduction
    double consistency = 0.0;
    double total = 0.0;
};

LossBreakdown loss_total(const ScalarVolume &warped, const ScalarVolume &fixed,
                         std::span<const SoftMask> per_step_masks, const SoftMask &fixed_masks,
                         const DisplacementField &field, const LossWeights &weights);

/// Same value as above with the step list split into earlier steps and the current one.
LossBreakdown loss_total(const ScalarVolume &warped, const ScalarVolume &fixed,
                         std::span<const SoftMask> earlier_step_masks, const SoftMask &current_masks,
                         const SoftMask &fixed_masks, const DisplacementField &field, const LossWeights &weights);

/// One refinement step. The frozen `base` field and the masks propagated by earlier
/// steps are constants; the free variable is the increment composed after `base`.
/// All volumes must be co-located.
struct StepProblem {
    const ScalarVolume &moving;
    const ScalarVolume &fixed;
    const SoftMask &moving_masks;
    const SoftMask &fixed_masks;
    const DisplacementField &base;
    std::span<const SoftMask> earlier_step_masks;
    const LossWeights &weights;
    // Optional cached loss_consistency(earlier_step_masks, fixed_masks, weights); it is
    // constant over a step.
    const double *earlier_consistency = nullptr;
};

struct StepEvaluation {
    LossBreakdown loss;
    DisplacementField composed;
    ScalarVolume warped;
    SoftMask warped_masks;
};

StepEvaluation evaluate_step(const StepProblem &problem, const DisplacementField &increment);

struct StepGradient {
    LossBreakdown loss;
    DisplacementField gradient; // dL/d(increment), same layout as the field
};

/// Analytic gradient of loss_total at compose(base, increment) with respect to the increment.
StepGradient grad_total(const StepProblem &problem, const DisplacementField &increment);

} // namespace segreg
