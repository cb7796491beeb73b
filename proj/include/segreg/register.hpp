#pragma once

// Progressive registration. Each of n_steps refinement steps solves for an incremental
// field by coarse-to-fine gradient descent on loss_total and composes it after the
// field accumulated so far. A translation-only baseline is provided for comparison.

#include "segreg/objective.hpp"

#include <cstdint>
#include <vector>

namespace segreg {

struct RegistrationConfig {
    int n_steps = 8;
    int iters_per_step = 40;       // per pyramid level
    double step_size = 1.0;        // largest update per iteration, in voxels of the current level
    double grad_smoothing_sigma = 1.0;
    int pyramid_levels = 3;
    double converge_tol = 1e-5;    // relative loss decrease
    std::uint64_t seed = 0;
    double mask_blur_sigma = 0.0;  // soft-mask blur before optimization, voxels
    int rigid_radius = 10;         // translation search range, voxels

    void validate() const;
};

struct RegistrationResult {
    DisplacementField final_field;
    std::vector<DisplacementField> per_step_fields; // accumulated field after each step
    std::vector<LossBreakdown> per_step_loss;       // single-step breakdown at that field
    std::vector<int> iterations_used;
    std::vector<bool> accepted;
    LossBreakdown initial_loss;                     // identity field
    double deep_supervision_consistency = 0.0;      // L_cons summed over all steps
    ScalarVolume warped_image;
    LabelVolume warped_labels;
};

struct PreprocessedPair {
    ScalarVolume moving;
    ScalarVolume fixed;
    LabelVolume moving_labels;
    LabelVolume fixed_labels;
};

/// Resample everything onto `target` and percentile-normalize both images independently.
PreprocessedPair preprocess_pair(const ScalarVolume &moving, const ScalarVolume &fixed,
                                 const LabelVolume &moving_labels, const LabelVolume &fixed_labels,
                                 const GridGeometry &target);

RegistrationResult register_pair(const ScalarVolume &moving, const ScalarVolume &fixed,
                                 const LabelVolume &moving_labels, const LabelVolume &fixed_labels,
                                 const LossWeights &weights, const RegistrationConfig &cfg);

/// Uniform translation minimizing global MSE: exhaustive integer search, then sub-voxel
/// refinement at half and quarter voxel offsets.
DisplacementField register_rigid(const ScalarVolume &moving, const ScalarVolume &fixed,
                                 const RegistrationConfig &cfg);

} // namespace segreg
