#include "segreg/register.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace segreg {

void RegistrationConfig::validate() const {
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
    if (iters_per_step < 1) throw std::invalid_argument("iters_per_step must be >= 1");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw std::invalid_argument("step_size must be positive");
    if (!(grad_smoothing_sigma >= 0.0)) throw std::invalid_argument("grad_smoothing_sigma must be >= 0");
    if (pyramid_levels < 1) throw std::invalid_argument("pyramid_levels must be >= 1");
    if (!(converge_tol >= 0.0)) throw std::invalid_argument("converge_tol must be >= 0");
    if (!(mask_blur_sigma >= 0.0)) throw std::invalid_argument("mask_blur_sigma must be >= 0");
    if (rigid_radius < 0) throw std::invalid_argument("rigid_radius must be >= 0");
}

PreprocessedPair preprocess_pair(const ScalarVolume &moving, const ScalarVolume &fixed,
                                 const LabelVolume &moving_labels, const LabelVolume &fixed_labels,
                                 const GridGeometry &target) {
    target.validate();
    moving.validate();
    fixed.validate();
    moving_labels.validate();
    fixed_labels.validate();
    PreprocessedPair out;
    out.moving = normalize_percentile(resample(moving, target)).volume;
    out.fixed = normalize_percentile(resample(fixed, target)).volume;
    out.moving_labels = resample(moving_labels, target);
    out.fixed_labels = resample(fixed_labels, target);
    return out;
}

namespace {

struct Level {
    GridGeometry geometry;
    ScalarVolume moving, fixed;
    SoftMask moving_masks, fixed_masks;
    LossWeights weights;
};

ScalarVolume downsample(const ScalarVolume &v, const GridGeometry &target) {
    return resample(gaussian_smooth(v, 1.0), target);
}

SoftMask downsample(const SoftMask &m, const GridGeometry &target) {
    SoftMask out;
    out.geometry = target;
    for (const auto &[s, ch] : m.channels) {
        ScalarVolume v(m.geometry);
        v.data = ch;
        out.channels.emplace(s, downsample(v, target).data);
    }
    return out;
}

// Finest level first.
std::vector<Level> build_pyramid(const ScalarVolume &moving, const ScalarVolume &fixed, const SoftMask &mm,
                                 const SoftMask &fm, const LossWeights &weights, int levels) {
    std::vector<Level> out;
    out.push_back({moving.geometry, moving, fixed, mm, fm, weights});
    while (static_cast<int>(out.size()) < levels) {
        const Level &prev = out.back();
        const Dims &d = prev.geometry.dims;
        if (*std::min_element(d.begin(), d.end()) < 8) break;
        const GridGeometry g = rescaled_geometry(prev.geometry, {(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2});
        Level next{g,
                   downsample(prev.moving, g),
                   downsample(prev.fixed, g),
                   downsample(prev.moving_masks, g),
                   downsample(prev.fixed_masks, g),
                   prev.weights};
        for (auto &p : next.weights.patch) p = std::max(1, p / 2);
        out.push_back(std::move(next));
    }
    return out;
}

DisplacementField smoothed_direction(const DisplacementField &grad, double sigma) {
    if (sigma <= 0.0) return grad;
    DisplacementField out = grad;
    std::vector<double> comp(grad.u.size());
    for (int c = 0; c < 3; ++c) {
        for (std::size_t n = 0; n < comp.size(); ++n) comp[n] = grad.u[n][c];
        const auto s = gaussian_smooth(comp, grad.geometry.dims, {sigma, sigma, sigma});
        for (std::size_t n = 0; n < comp.size(); ++n) out.u[n][c] = s[n];
    }
    return out;
}

// Gradient descent on one level; `v` is updated in place. Returns iterations used.
int solve_level(const StepProblem &prob, DisplacementField &v, const RegistrationConfig &cfg) {
    const Vec3 &s = v.geometry.spacing;
    auto cur = grad_total(prob, v);
    double alpha = cfg.step_size;
    int it = 0;
    for (; it < cfg.iters_per_step; ++it) {
        const auto d = smoothed_direction(cur.gradient, cfg.grad_smoothing_sigma);
        double peak = 0.0;
        for (const auto &x : d.u)
            for (int c = 0; c < 3; ++c) peak = std::max(peak, std::abs(x[c]) / s[c]);
        if (!(peak > 0.0) || !std::isfinite(peak)) break;

        bool improved = false;
        DisplacementField trial = v;
        StepGradient next;
        for (int halving = 0; halving <= 8; ++halving, alpha *= 0.5) {
            const double scale = alpha / peak;
            for (std::size_t n = 0; n < v.u.size(); ++n)
                for (int c = 0; c < 3; ++c) trial.u[n][c] = v.u[n][c] - scale * d.u[n][c];
            next = grad_total(prob, trial);
            if (next.loss.total < cur.loss.total) {
                improved = true;
                break;
            }
        }
        if (!improved) break;
        const double before = cur.loss.total;
        v = std::move(trial);
        cur = std::move(next);
        alpha = std::min(cfg.step_size, alpha * 2.0);
        if ((before - cur.loss.total) <= cfg.converge_tol * std::abs(before)) {
            ++it;
            break;
        }
    }
    return it;
}

void require_structures(const LabelVolume &labels, const char *which) {
    const auto present = label_set(labels);
    for (auto s : consistency_structures) {
        if (!std::binary_search(present.begin(), present.end(), static_cast<std::int32_t>(s)))
            throw std::invalid_argument(std::string(which) + " labels are missing structure " +
                                        std::string(structure_name(s)));
    }
}

} // namespace

RegistrationResult register_pair(const ScalarVolume &moving, const ScalarVolume &fixed,
                                 const LabelVolume &moving_labels, const LabelVolume &fixed_labels,
                                 const LossWeights &weights, const RegistrationConfig &cfg) {
    cfg.validate();
    weights.validate();
    moving.validate();
    fixed.validate();
    moving_labels.validate();
    fixed_labels.validate();
    const GridGeometry &g = fixed.geometry;
    if (!(moving.geometry == g) || !(moving_labels.geometry == g) || !(fixed_labels.geometry == g))
        throw std::invalid_argument("register_pair: inputs are not co-located");
    require_structures(moving_labels, "moving");
    require_structures(fixed_labels, "fixed");

    const auto mm = make_soft_masks(moving_labels, consistency_structures, cfg.mask_blur_sigma);
    const auto fm = make_soft_masks(fixed_labels, consistency_structures, cfg.mask_blur_sigma);
    const auto pyramid = build_pyramid(moving, fixed, mm, fm, weights, cfg.pyramid_levels);

    RegistrationResult res;
    DisplacementField total(g);
    std::vector<SoftMask> step_masks; // warped masks of every step, for deep supervision
    {
        const std::vector<SoftMask> one{mm};
        res.initial_loss = loss_total(moving, fixed, one, fm, total, weights);
    }
    double best = res.initial_loss.total;
    bool stalled = false;

    for (int step = 0; step < cfg.n_steps; ++step) {
        int iters = 0;
        bool accepted = false;
        if (!stalled) {
            DisplacementField v(pyramid.back().geometry);
            for (int l = static_cast<int>(pyramid.size()) - 1; l >= 0; --l) {
                const Level &lv = pyramid[l];
                if (!(v.geometry == lv.geometry)) v = resample_field(v, lv.geometry);
                const DisplacementField base = l == 0 ? total : resample_field(total, lv.geometry);
                // Earlier steps' masks are constants; only the finest level carries them.
                const std::span<const SoftMask> earlier =
                    l == 0 ? std::span<const SoftMask>(step_masks) : std::span<const SoftMask>();
                const double earlier_cons = loss_consistency(earlier, lv.fixed_masks, lv.weights);
                const StepProblem prob{lv.moving, lv.fixed, lv.moving_masks, lv.fixed_masks, base, earlier, lv.weights,
                                       &earlier_cons};
                iters += solve_level(prob, v, cfg);
            }
            const StepProblem fine{moving, fixed, mm, fm, total, {}, weights};
            auto ev = evaluate_step(fine, v);
            if (ev.loss.total < best) {
                accepted = true;
                best = ev.loss.total;
                total = std::move(ev.composed);
                res.per_step_loss.push_back(ev.loss);
                step_masks.push_back(std::move(ev.warped_masks));
            }
        }
        if (!accepted) {
            // A zero increment leaves the field unchanged, so every later step would
            // repeat the same solve and fail the same way.
            stalled = true;
            res.per_step_loss.push_back(res.per_step_loss.empty() ? res.initial_loss : res.per_step_loss.back());
            step_masks.push_back(warp_soft_masks(mm, total));
        }
        res.per_step_fields.push_back(total);
        res.iterations_used.push_back(iters);
        res.accepted.push_back(accepted);
    }

    res.deep_supervision_consistency = loss_consistency(step_masks, fm, weights);
    res.final_field = total;
    res.warped_image = warp_image(moving, total);
    res.warped_labels = warp_labels(moving_labels, total);
    return res;
}

namespace {

double shifted_mse(const ScalarVolume &moving, const ScalarVolume &fixed, int tx, int ty, int tz) {
    const Dims &d = fixed.geometry.dims;
    double acc = 0.0;
    for (int k = 0; k < d[2]; ++k) {
        const int kk = std::clamp(k + tz, 0, d[2] - 1);
        for (int j = 0; j < d[1]; ++j) {
            const int jj = std::clamp(j + ty, 0, d[1] - 1);
            const double *f = &fixed.data[fixed.geometry.index(0, j, k)];
            const double *m = &moving.data[moving.geometry.index(0, jj, kk)];
            for (int i = 0; i < d[0]; ++i) {
                const double diff = m[std::clamp(i + tx, 0, d[0] - 1)] - f[i];
                acc += diff * diff;
            }
        }
    }
    return acc / static_cast<double>(fixed.data.size());
}

double translated_mse(const ScalarVolume &moving, const ScalarVolume &fixed, const Vec3 &t_vox) {
    const Vec3 &s = fixed.geometry.spacing;
    const DisplacementField f(fixed.geometry, {t_vox[0] * s[0], t_vox[1] * s[1], t_vox[2] * s[2]});
    const auto w = warp_image(moving, f);
    double acc = 0.0;
    for (std::size_t n = 0; n < w.data.size(); ++n) acc += (w.data[n] - fixed.data[n]) * (w.data[n] - fixed.data[n]);
    return acc / static_cast<double>(w.data.size());
}

} // namespace

DisplacementField register_rigid(const ScalarVolume &moving, const ScalarVolume &fixed,
                                 const RegistrationConfig &cfg) {
    moving.validate();
    fixed.validate();
    if (!(moving.geometry == fixed.geometry)) throw std::invalid_argument("register_rigid: inputs are not co-located");
    const int r = cfg.rigid_radius;
    Vec3 best_t{0.0, 0.0, 0.0};
    double best = shifted_mse(moving, fixed, 0, 0, 0);
    for (int tz = -r; tz <= r; ++tz)
        for (int ty = -r; ty <= r; ++ty)
            for (int tx = -r; tx <= r; ++tx) {
                const double e = shifted_mse(moving, fixed, tx, ty, tz);
                if (e < best) {
                    best = e;
                    best_t = {double(tx), double(ty), double(tz)};
                }
            }
    for (double h : {0.5, 0.25}) {
        const Vec3 centre = best_t;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const Vec3 t{centre[0] + dx * h, centre[1] + dy * h, centre[2] + dz * h};
                    const double e = translated_mse(moving, fixed, t);
                    if (e < best) {
                        best = e;
                        best_t = t;
                    }
                }
    }
    const Vec3 &s = fixed.geometry.spacing;
    return DisplacementField(fixed.geometry, {best_t[0] * s[0], best_t[1] * s[1], best_t[2] * s[2]});
}

} // namespace segreg
