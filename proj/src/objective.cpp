#include "segreg/objective.hpp"

#include "interp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace segreg {

void LossWeights::validate() const {
    if (!(lambda_smooth >= 0.0) || !std::isfinite(lambda_smooth)) {
        throw std::invalid_argument("lambda_smooth must be a finite value >= 0");
    }
    if (!(lambda_cons >= 0.0) || !std::isfinite(lambda_cons)) {
        throw std::invalid_argument("lambda_cons must be a finite value >= 0");
    }
    double sum = 0.0;
    for (const auto &[s, w] : structure_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("weight for " + std::string(structure_name(s)) + " must be >= 0");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("structure weights must sum to 1");
    }
    for (int a = 0; a < 3; ++a) {
        if (patch[a] < 1) throw std::invalid_argument("patch dims must be >= 1");
    }
}

const std::vector<double> &SoftMask::channel(Structure s) const {
    auto it = channels.find(s);
    if (it == channels.end()) {
        throw std::invalid_argument("soft mask has no channel for structure '" +
                                    std::string(structure_name(s)) + "'");
    }
    return it->second;
}

SoftMask make_soft_masks(const LabelVolume &labels, std::span<const Structure> structures,
                         double blur_sigma_voxels) {
    labels.validate();
    SoftMask out;
    out.geometry = labels.geometry;
    for (auto s : structures) {
        std::vector<double> ch(labels.data.size());
        const auto code = static_cast<std::int32_t>(s);
        for (std::size_t n = 0; n < ch.size(); ++n) ch[n] = labels.data[n] == code ? 1.0 : 0.0;
        if (blur_sigma_voxels > 0.0) {
            ch = gaussian_smooth(ch, labels.geometry.dims, {blur_sigma_voxels, blur_sigma_voxels, blur_sigma_voxels});
        }
        out.channels.emplace(s, std::move(ch));
    }
    return out;
}

SoftMask warp_soft_masks(const SoftMask &masks, const DisplacementField &field) {
    const auto map = IndexMap::between(field.geometry, masks.geometry);
    const auto &g = field.geometry;
    SoftMask out;
    out.geometry = g;
    for (const auto &[s, ch] : masks.channels) {
        std::vector<double> w(g.voxel_count());
        std::size_t n = 0;
        for (int k = 0; k < g.dims[2]; ++k) {
            for (int j = 0; j < g.dims[1]; ++j) {
                for (int i = 0; i < g.dims[0]; ++i, ++n) {
                    w[n] = sample_trilinear(ch, masks.geometry.dims, map.apply(i, j, k, field.u[n]));
                }
            }
        }
        out.channels.emplace(s, std::move(w));
    }
    return out;
}

namespace {

void require_same(const GridGeometry &a, const GridGeometry &b, const char *what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": inputs are not co-located");
}

// Patch bookkeeping for loss_similarity: patch id per voxel and voxel count per patch.
struct PatchLayout {
    std::vector<std::size_t> patch_of;
    std::vector<std::size_t> count;
};

PatchLayout patch_layout(const GridGeometry &g, const Dims &patch) {
    PatchLayout lay;
    int np[3];
    for (int a = 0; a < 3; ++a) np[a] = (g.dims[a] + patch[a] - 1) / patch[a];
    lay.count.assign(static_cast<std::size_t>(np[0]) * np[1] * np[2], 0);
    lay.patch_of.resize(g.voxel_count());
    std::size_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                const std::size_t id =
                    (static_cast<std::size_t>(k / patch[2]) * np[1] + j / patch[1]) * np[0] + i / patch[0];
                lay.patch_of[n] = id;
                ++lay.count[id];
            }
        }
    }
    return lay;
}

} // namespace

double loss_similarity(const ScalarVolume &warped, const ScalarVolume &fixed, const Dims &patch) {
    require_same(warped.geometry, fixed.geometry, "loss_similarity");
    for (int a = 0; a < 3; ++a) {
        if (patch[a] < 1) throw std::invalid_argument("patch dims must be >= 1");
    }
    const auto lay = patch_layout(fixed.geometry, patch);
    std::vector<double> sse(lay.count.size(), 0.0);
    for (std::size_t n = 0; n < fixed.data.size(); ++n) {
        const double d = warped.data[n] - fixed.data[n];
        sse[lay.patch_of[n]] += d * d;
    }
    double acc = 0.0;
    for (std::size_t p = 0; p < sse.size(); ++p) acc += sse[p] / static_cast<double>(lay.count[p]);
    return acc / static_cast<double>(sse.size());
}

double loss_smooth(const DisplacementField &field) {
    const auto &g = field.geometry;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const std::size_t stride[3] = {1, static_cast<std::size_t>(nx), static_cast<std::size_t>(nx) * ny};
    double acc = 0.0;
    std::size_t n = 0;
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i, ++n) {
                const int pos[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (pos[a] + 1 >= g.dims[a]) continue;
                    const auto &u0 = field.u[n];
                    const auto &u1 = field.u[n + stride[a]];
                    for (int c = 0; c < 3; ++c) {
                        const double d = (u1[c] - u0[c]) / g.spacing[a];
                        acc += d * d;
                    }
                }
            }
        }
    }
    return acc;
}

double smooth_divisor(SmoothReduction reduction, std::size_t voxels) {
    switch (reduction) {
    case SmoothReduction::sum: return 1.0;
    case SmoothReduction::mean: return static_cast<double>(voxels);
    case SmoothReduction::element_mean: return 9.0 * static_cast<double>(voxels);
    }
    return 1.0;
}

double loss_smooth(const DisplacementField &field, SmoothReduction reduction) {
    return loss_smooth(field) / smooth_divisor(reduction, field.geometry.voxel_count());
}

double soft_dsc(std::span<const double> pred, std::span<const double> target, double eps) {
    if (pred.size() != target.size()) throw std::invalid_argument("soft_dsc: mask sizes differ");
    if (!(eps > 0.0)) throw std::invalid_argument("soft_dsc: eps must be > 0");
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        inter += pred[n] * target[n];
        sp += pred[n];
        st += target[n];
    }
    return (2.0 * inter + eps) / (sp + st + eps);
}

double step_consistency(const SoftMask &step, const SoftMask &fixed_masks, const LossWeights &weights) {
    require_same(step.geometry, fixed_masks.geometry, "loss_consistency");
    double acc = 0.0;
    for (const auto &[s, w] : weights.structure_weights) {
        acc += w * (1.0 - soft_dsc(step.channel(s), fixed_masks.channel(s)));
    }
    return acc;
}

double loss_consistency(std::span<const SoftMask> per_step_masks, const SoftMask &fixed_masks,
                        const LossWeights &weights) {
    double acc = 0.0;
    for (const auto &step : per_step_masks) acc += step_consistency(step, fixed_masks, weights);
    return acc;
}

LossBreakdown loss_total(const ScalarVolume &warped, const ScalarVolume &fixed,
                         std::span<const SoftMask> per_step_masks, const SoftMask &fixed_masks,
                         const DisplacementField &field, const LossWeights &weights) {
    require_same(warped.geometry, field.geometry, "loss_total");
    LossBreakdown b;
    b.similarity = loss_similarity(warped, fixed, weights.patch);
    b.smooth = loss_smooth(field, weights.smooth_reduction);
    b.consistency = loss_consistency(per_step_masks, fixed_masks, weights);
    b.total = b.similarity + weights.lambda_smooth * b.smooth + weights.lambda_cons * b.consistency;
    return b;
}

namespace {

LossBreakdown loss_total_cached(const ScalarVolume &warped, const ScalarVolume &fixed, double earlier,
                                const SoftMask &current_masks, const SoftMask &fixed_masks,
                                const DisplacementField &field, const LossWeights &weights) {
    require_same(warped.geometry, field.geometry, "loss_total");
    LossBreakdown b;
    b.similarity = loss_similarity(warped, fixed, weights.patch);
    b.smooth = loss_smooth(field, weights.smooth_reduction);
    b.consistency = earlier + step_consistency(current_masks, fixed_masks, weights);
    b.total = b.similarity + weights.lambda_smooth * b.smooth + weights.lambda_cons * b.consistency;
    return b;
}

} // namespace

LossBreakdown loss_total(const ScalarVolume &warped, const ScalarVolume &fixed,
                         std::span<const SoftMask> earlier_step_masks, const SoftMask &current_masks,
                         const SoftMask &fixed_masks, const DisplacementField &field, const LossWeights &weights) {
    return loss_total_cached(warped, fixed, loss_consistency(earlier_step_masks, fixed_masks, weights), current_masks,
                             fixed_masks, field, weights);
}

namespace {

LossBreakdown problem_loss(const StepProblem &p, const ScalarVolume &warped, const SoftMask &current,
                           const DisplacementField &composed) {
    const double earlier = p.earlier_consistency ? *p.earlier_consistency
                                                 : loss_consistency(p.earlier_step_masks, p.fixed_masks, p.weights);
    return loss_total_cached(warped, p.fixed, earlier, current, p.fixed_masks, composed, p.weights);
}

void check_problem(const StepProblem &p, const DisplacementField &increment) {
    const auto &g = p.fixed.geometry;
    require_same(p.moving.geometry, g, "step problem (moving image)");
    require_same(p.moving_masks.geometry, g, "step problem (moving masks)");
    require_same(p.fixed_masks.geometry, g, "step problem (fixed masks)");
    require_same(p.base.geometry, g, "step problem (base field)");
    require_same(increment.geometry, g, "step problem (increment)");
    for (const auto &m : p.earlier_step_masks) require_same(m.geometry, g, "step problem (earlier masks)");
}

} // namespace

StepEvaluation evaluate_step(const StepProblem &problem, const DisplacementField &increment) {
    check_problem(problem, increment);
    StepEvaluation ev;
    ev.composed = compose(problem.base, increment);
    ev.warped = warp_image(problem.moving, ev.composed);
    ev.warped_masks = warp_soft_masks(problem.moving_masks, ev.composed);
    ev.loss = problem_loss(problem, ev.warped, ev.warped_masks, ev.composed);
    return ev;
}

StepGradient grad_total(const StepProblem &problem, const DisplacementField &increment) {
    check_problem(problem, increment);
    const auto &g = problem.fixed.geometry;
    const auto &w = problem.weights;
    const std::size_t nvox = g.voxel_count();
    const Vec3 inv{1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};

    std::vector<Structure> structures;
    std::vector<double> struct_weight;
    std::vector<const std::vector<double> *> moving_ch, fixed_ch;
    for (const auto &[s, wk] : w.structure_weights) {
        structures.push_back(s);
        struct_weight.push_back(wk);
        moving_ch.push_back(&problem.moving_masks.channel(s));
        fixed_ch.push_back(&problem.fixed_masks.channel(s));
    }
    const std::size_t ns = structures.size();

    // Forward pass: composed field, chain matrix dU/dv, warped image and masks with
    // their spatial gradients (per index unit).
    DisplacementField composed(g);
    std::vector<Mat3> chain(nvox);
    ScalarVolume warped(g);
    std::vector<Vec3> img_grad(nvox);
    std::vector<std::vector<double>> mask_val(ns, std::vector<double>(nvox));
    std::vector<std::vector<Vec3>> mask_grad(ns, std::vector<Vec3>(nvox));

    std::size_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                const auto &d = increment.u[n];
                const Vec3 q0{i + d[0] * inv[0], j + d[1] * inv[1], k + d[2] * inv[2]};
                Mat3 jb;
                const Vec3 ub = sample_field_jacobian(problem.base, q0, jb);
                Vec3 &uc = composed.u[n];
                uc = {d[0] + ub[0], d[1] + ub[1], d[2] + ub[2]};
                for (int c = 0; c < 3; ++c) {
                    for (int a = 0; a < 3; ++a) chain[n][c][a] = (c == a ? 1.0 : 0.0) + jb[c][a] * inv[a];
                }
                const Vec3 q{i + uc[0] * inv[0], j + uc[1] * inv[1], k + uc[2] * inv[2]};
                const auto cell = detail::make_cell(g.dims, q);
                warped.data[n] = detail::cell_value_grad(problem.moving.data.data(), cell, img_grad[n]);
                for (std::size_t s = 0; s < ns; ++s) {
                    mask_val[s][n] = detail::cell_value_grad(moving_ch[s]->data(), cell, mask_grad[s][n]);
                }
            }
        }
    }

    StepGradient out;
    SoftMask current;
    current.geometry = g;
    for (std::size_t s = 0; s < ns; ++s) current.channels.emplace(structures[s], std::move(mask_val[s]));
    out.loss = problem_loss(problem, warped, current, composed);

    // dL/dU accumulated per voxel.
    std::vector<Vec3> g_u(nvox, Vec3{0.0, 0.0, 0.0});

    // Similarity: mean over patches of per-patch MSE.
    {
        const auto lay = patch_layout(g, w.patch);
        const double inv_patches = 1.0 / static_cast<double>(lay.count.size());
        for (std::size_t m = 0; m < nvox; ++m) {
            const double dl_dw = 2.0 * (warped.data[m] - problem.fixed.data[m]) * inv_patches /
                                 static_cast<double>(lay.count[lay.patch_of[m]]);
            for (int a = 0; a < 3; ++a) g_u[m][a] += dl_dw * img_grad[m][a] * inv[a];
        }
    }

    // Consistency: only the current step's masks depend on the increment.
    if (w.lambda_cons != 0.0) {
        constexpr double eps = 1e-6;
        for (std::size_t s = 0; s < ns; ++s) {
            const auto &p = current.channel(structures[s]);
            const auto &t = *fixed_ch[s];
            double inter = 0.0, sp = 0.0, st = 0.0;
            for (std::size_t m = 0; m < nvox; ++m) {
                inter += p[m] * t[m];
                sp += p[m];
                st += t[m];
            }
            const double num = 2.0 * inter + eps;
            const double den = sp + st + eps;
            const double scale = -w.lambda_cons * struct_weight[s] / (den * den);
            for (std::size_t m = 0; m < nvox; ++m) {
                const double dl_dp = scale * (2.0 * t[m] * den - num);
                for (int a = 0; a < 3; ++a) g_u[m][a] += dl_dp * mask_grad[s][m][a] * inv[a];
            }
        }
    }

    // Smoothness: adjoint of the forward-difference stencil.
    if (w.lambda_smooth != 0.0) {
        const double factor = 2.0 * w.lambda_smooth / smooth_divisor(w.smooth_reduction, nvox);
        const std::size_t stride[3] = {1, static_cast<std::size_t>(g.dims[0]),
                                       static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
        std::size_t m = 0;
        for (int k = 0; k < g.dims[2]; ++k) {
            for (int j = 0; j < g.dims[1]; ++j) {
                for (int i = 0; i < g.dims[0]; ++i, ++m) {
                    const int pos[3] = {i, j, k};
                    for (int a = 0; a < 3; ++a) {
                        if (pos[a] + 1 >= g.dims[a]) continue;
                        const std::size_t m1 = m + stride[a];
                        const double inv2 = inv[a] * inv[a];
                        for (int c = 0; c < 3; ++c) {
                            const double gdiff = factor * (composed.u[m1][c] - composed.u[m][c]) * inv2;
                            g_u[m1][c] += gdiff;
                            g_u[m][c] -= gdiff;
                        }
                    }
                }
            }
        }
    }

    out.gradient = DisplacementField(g);
    for (std::size_t m = 0; m < nvox; ++m) {
        for (int a = 0; a < 3; ++a) {
            double acc = 0.0;
            for (int c = 0; c < 3; ++c) acc += chain[m][c][a] * g_u[m][c];
            out.gradient.u[m][a] = acc;
        }
    }
    return out;
}

} // namespace segreg
