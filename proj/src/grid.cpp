#include "segreg/grid.hpp"

#include "interp.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace segreg {


std::string_view structure_name(Structure s) {
    switch (s) {
    case Structure::background: return "background";
    case Structure::bladder: return "bladder";
    case Structure::rectum: return "rectum";
    case Structure::ctv: return "ctv";
    case Structure::urethra: return "urethra";
    }
    return "unknown";
}

Structure parse_structure(std::string_view name) {
    if (name == "bladder") return Structure::bladder;
    if (name == "rectum") return Structure::rectum;
    if (name == "ctv" || name == "prostate" || name == "prostate-ctv") return Structure::ctv;
    if (name == "urethra") return Structure::urethra;
    if (name == "background") return Structure::background;
    throw std::invalid_argument("unknown structure '" + std::string(name) + "'");
}

void GridGeometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) {
            throw std::invalid_argument("grid dimension " + std::to_string(a) + " must be >= 2, got " +
                                        std::to_string(dims[a]));
        }
        if (!std::isfinite(spacing[a]) || !(spacing[a] > 0.0)) {
            throw std::invalid_argument("grid spacing must be finite and positive");
        }
        if (!std::isfinite(origin[a])) {
            throw std::invalid_argument("grid origin must be finite");
        }
    }
}

IndexMap IndexMap::between(const GridGeometry &from, const GridGeometry &into) {
    IndexMap m;
    for (int a = 0; a < 3; ++a) {
        m.scale[a] = from.spacing[a] / into.spacing[a];
        m.offset[a] = (from.origin[a] - into.origin[a]) / into.spacing[a];
        m.inv_spacing[a] = 1.0 / into.spacing[a];
    }
    return m;
}

ScalarVolume::ScalarVolume(GridGeometry g, double fill) : geometry(g), data(g.voxel_count(), fill) {}

ScalarVolume::ScalarVolume(GridGeometry g, std::vector<double> values)
    : geometry(g), data(std::move(values)) {
    if (data.size() != geometry.voxel_count()) {
        throw std::invalid_argument("scalar volume data length does not match geometry");
    }
}

void ScalarVolume::validate() const {
    geometry.validate();
    if (data.size() != geometry.voxel_count()) {
        throw std::invalid_argument("scalar volume data length does not match geometry");
    }
    for (double v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("scalar volume contains non-finite values");
    }
}

LabelVolume::LabelVolume(GridGeometry g, std::int32_t fill) : geometry(g), data(g.voxel_count(), fill) {}

LabelVolume::LabelVolume(GridGeometry g, std::vector<std::int32_t> values)
    : geometry(g), data(std::move(values)) {
    if (data.size() != geometry.voxel_count()) {
        throw std::invalid_argument("label volume data length does not match geometry");
    }
}

void LabelVolume::validate() const {
    geometry.validate();
    if (data.size() != geometry.voxel_count()) {
        throw std::invalid_argument("label volume data length does not match geometry");
    }
}

void LabelVolume::validate_codes() const {
    validate();
    for (auto v : data) {
        if (v < 0 || v > max_label_code) {
            throw std::invalid_argument("label code " + std::to_string(v) + " is not a known structure");
        }
    }
}

std::vector<std::int32_t> label_set(const LabelVolume &labels) {
    std::set<std::int32_t> s(labels.data.begin(), labels.data.end());
    return {s.begin(), s.end()};
}

namespace {

void require_finite(const Vec3 &q) {
    if (!std::isfinite(q[0]) || !std::isfinite(q[1]) || !std::isfinite(q[2])) {
        throw std::invalid_argument("sample position must be finite");
    }
}

} // namespace

double sample_trilinear(std::span<const double> data, const Dims &dims, const Vec3 &q) {
    return detail::cell_value(data.data(), detail::make_cell(dims, q));
}

double sample_trilinear_grad(std::span<const double> data, const Dims &dims, const Vec3 &q, Vec3 &dq) {
    return detail::cell_value_grad(data.data(), detail::make_cell(dims, q), dq);
}

double sample_trilinear(const ScalarVolume &vol, const Vec3 &q) {
    require_finite(q);
    return sample_trilinear(vol.data, vol.geometry.dims, q);
}

std::array<int, 3> nearest_voxel(const Dims &dims, const Vec3 &q) {
    std::array<int, 3> idx{};
    for (int a = 0; a < 3; ++a) {
        // ceil(q - 0.5) rounds half toward the lower index.
        double r = std::ceil(q[a] - 0.5);
        r = std::clamp(r, 0.0, static_cast<double>(dims[a] - 1));
        idx[a] = static_cast<int>(r);
    }
    return idx;
}

std::int32_t sample_nearest(const LabelVolume &vol, const Vec3 &q) {
    require_finite(q);
    const auto idx = nearest_voxel(vol.geometry.dims, q);
    return vol.data[vol.geometry.index(idx[0], idx[1], idx[2])];
}

ScalarVolume resample(const ScalarVolume &vol, const GridGeometry &target) {
    target.validate();
    vol.geometry.validate();
    if (vol.geometry == target) return vol;
    const auto map = IndexMap::between(target, vol.geometry);
    ScalarVolume out(target);
    std::size_t n = 0;
    for (int k = 0; k < target.dims[2]; ++k) {
        for (int j = 0; j < target.dims[1]; ++j) {
            for (int i = 0; i < target.dims[0]; ++i) {
                out.data[n++] = sample_trilinear(vol.data, vol.geometry.dims, map.apply(i, j, k));
            }
        }
    }
    return out;
}

LabelVolume resample(const LabelVolume &vol, const GridGeometry &target) {
    target.validate();
    vol.geometry.validate();
    if (vol.geometry == target) return vol;
    const auto map = IndexMap::between(target, vol.geometry);
    LabelVolume out(target);
    std::size_t n = 0;
    for (int k = 0; k < target.dims[2]; ++k) {
        for (int j = 0; j < target.dims[1]; ++j) {
            for (int i = 0; i < target.dims[0]; ++i) {
                const auto idx = nearest_voxel(vol.geometry.dims, map.apply(i, j, k));
                out.data[n++] = vol.data[vol.geometry.index(idx[0], idx[1], idx[2])];
            }
        }
    }
    return out;
}

GridGeometry rescaled_geometry(const GridGeometry &source, const Dims &dims) {
    GridGeometry g;
    g.dims = dims;
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) throw std::invalid_argument("target dims must be >= 2");
        const double extent = source.spacing[a] * source.dims[a];
        g.spacing[a] = extent / dims[a];
        g.origin[a] = source.origin[a] - 0.5 * source.spacing[a] + 0.5 * g.spacing[a];
    }
    g.validate();
    return g;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[i + radius] = w;
        sum += w;
    }
    for (auto &w : k) w /= sum;
    return k;
}

void smooth_axis(std::vector<double> &buf, const Dims &dims, int axis, double sigma) {
    if (!(sigma > 0.0)) return;
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    const int n = dims[axis];
    const std::size_t stride = axis == 0 ? 1
                               : axis == 1 ? static_cast<std::size_t>(dims[0])
                                           : static_cast<std::size_t>(dims[0]) * dims[1];
    // Edge-clamped line copy, so the taps need no bounds checks.
    std::vector<double> line(n + 2 * radius), out_line(n);
    Dims outer = dims;
    outer[axis] = 1;
    for (int k = 0; k < outer[2]; ++k) {
        for (int j = 0; j < outer[1]; ++j) {
            for (int i = 0; i < outer[0]; ++i) {
                const std::size_t base = (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
                for (int t = 0; t < n + 2 * radius; ++t) line[t] = buf[base + std::clamp(t - radius, 0, n - 1) * stride];
                for (int t = 0; t < n; ++t) {
                    double acc = 0.0;
                    for (int r = 0; r <= 2 * radius; ++r) acc += kernel[r] * line[t + r];
                    out_line[t] = acc;
                }
                for (int t = 0; t < n; ++t) buf[base + t * stride] = out_line[t];
            }
        }
    }
}

} // namespace

std::vector<double> gaussian_smooth(std::span<const double> data, const Dims &dims, const Vec3 &sigma_voxels) {
    std::vector<double> buf(data.begin(), data.end());
    for (int a = 0; a < 3; ++a) smooth_axis(buf, dims, a, sigma_voxels[a]);
    return buf;
}

ScalarVolume gaussian_smooth(const ScalarVolume &vol, double sigma_voxels) {
    return ScalarVolume(vol.geometry,
                        gaussian_smooth(vol.data, vol.geometry.dims, {sigma_voxels, sigma_voxels, sigma_voxels}));
}

double percentile_nearest_rank(std::span<const double> values, double pct) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    if (!(pct >= 0.0 && pct <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(pct * n / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    std::vector<double> tmp(values.begin(), values.end());
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(rank - 1), tmp.end());
    return tmp[rank - 1];
}

NormalizedVolume normalize_percentile(const ScalarVolume &vol, double lo_pct, double hi_pct) {
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0)) {
        throw std::invalid_argument("percentiles must satisfy 0 <= lo < hi <= 100");
    }
    vol.validate();
    NormalizedVolume out;
    out.lo_value = percentile_nearest_rank(vol.data, lo_pct);
    out.hi_value = percentile_nearest_rank(vol.data, hi_pct);
    out.volume = ScalarVolume(vol.geometry, 0.0);
    if (!(out.hi_value > out.lo_value)) {
        out.degenerate = true;
        return out;
    }
    const double a = out.lo_value, b = out.hi_value, range = b - a;
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
        out.volume.data[i] = (std::clamp(vol.data[i], a, b) - a) / range;
    }
    return out;
}

} // namespace segreg
