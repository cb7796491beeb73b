#include "segreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace segreg {

BinaryMask::BinaryMask(GridGeometry g, std::uint8_t fill) : geometry(g), data(g.voxel_count(), fill) {}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

BinaryMask structure_mask(const LabelVolume &labels, Structure s) {
    BinaryMask m(labels.geometry);
    const auto code = static_cast<std::int32_t>(s);
    for (std::size_t n = 0; n < m.data.size(); ++n) m.data[n] = labels.data[n] == code ? 1 : 0;
    return m;
}

namespace {

void check_pair(const BinaryMask &a, const BinaryMask &b, const char *what) {
    if (!(a.geometry == b.geometry)) throw std::invalid_argument(std::string(what) + ": masks are not co-located");
    if (a.data.size() != a.geometry.voxel_count() || b.data.size() != b.geometry.voxel_count())
        throw std::invalid_argument(std::string(what) + ": mask length does not match its geometry");
}

// Uniform buckets of B voxels per axis over the target point set.
class BucketIndex {
public:
    static constexpr int B = 4;

    BucketIndex(const SurfacePointSet &pts, const GridGeometry &g) : pts_(pts) {
        for (int a = 0; a < 3; ++a) nb_[a] = (g.dims[a] + B - 1) / B;
        min_spacing_ = std::min({g.spacing[0], g.spacing[1], g.spacing[2]});
        start_.assign(static_cast<std::size_t>(nb_[0]) * nb_[1] * nb_[2] + 1, 0);
        for (const auto &v : pts.voxels) ++start_[bucket(v[0] / B, v[1] / B, v[2] / B) + 1];
        for (std::size_t b = 1; b < start_.size(); ++b) start_[b] += start_[b - 1];
        order_.resize(pts.voxels.size());
        auto fill = start_;
        for (std::size_t p = 0; p < pts.voxels.size(); ++p) {
            const auto &v = pts.voxels[p];
            order_[fill[bucket(v[0] / B, v[1] / B, v[2] / B)]++] = p;
        }
    }

    double nearest_squared(const std::array<int, 3> &voxel, const Vec3 &point) const {
        const int b0[3] = {voxel[0] / B, voxel[1] / B, voxel[2] / B};
        const int max_ring = std::max({nb_[0], nb_[1], nb_[2]});
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r <= max_ring; ++r) {
            for (int z = b0[2] - r; z <= b0[2] + r; ++z) {
                if (z < 0 || z >= nb_[2]) continue;
                for (int y = b0[1] - r; y <= b0[1] + r; ++y) {
                    if (y < 0 || y >= nb_[1]) continue;
                    const bool shell_zy = std::abs(z - b0[2]) == r || std::abs(y - b0[1]) == r;
                    for (int x = b0[0] - r; x <= b0[0] + r; x += (shell_zy || r == 0) ? 1 : 2 * r) {
                        if (x < 0 || x >= nb_[0]) continue;
                        const std::size_t b = bucket(x, y, z);
                        for (std::size_t o = start_[b]; o < start_[b + 1]; ++o)
                            best = std::min(best, squared_distance(point, pts_.points[order_[o]]));
                    }
                }
            }
            // Buckets in ring r + 1 are at least r * B + 1 voxels away along some axis.
            const double bound = (r * B + 1) * min_spacing_;
            if (best < bound * bound * (1.0 - 1e-12)) break;
        }
        return best;
    }

private:
    std::size_t bucket(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * nb_[1] + static_cast<std::size_t>(y)) * nb_[0] + static_cast<std::size_t>(x);
    }

    const SurfacePointSet &pts_;
    int nb_[3];
    double min_spacing_;
    std::vector<std::size_t> start_;
    std::vector<std::size_t> order_;
};

} // namespace

double dsc_binary(const BinaryMask &a, const BinaryMask &b) {
    check_pair(a, b, "dsc");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t n = 0; n < a.data.size(); ++n) {
        const bool x = a.data[n] != 0, y = b.data[n] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

SurfacePointSet extract_surface(const BinaryMask &mask) {
    const auto &g = mask.geometry;
    if (mask.data.size() != g.voxel_count()) throw std::invalid_argument("surface: mask length does not match its geometry");
    SurfacePointSet s;
    auto fg = [&](int i, int j, int k) {
        if (i < 0 || j < 0 || k < 0 || i >= g.dims[0] || j >= g.dims[1] || k >= g.dims[2]) return false;
        return mask(i, j, k) != 0;
    };
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i) {
                if (!fg(i, j, k)) continue;
                if (fg(i - 1, j, k) && fg(i + 1, j, k) && fg(i, j - 1, k) && fg(i, j + 1, k) && fg(i, j, k - 1) &&
                    fg(i, j, k + 1))
                    continue;
                s.voxels.push_back({i, j, k});
                s.points.push_back(g.world(i, j, k));
            }
        }
    }
    if (s.points.empty()) throw std::invalid_argument("surface: mask is empty");
    return s;
}

std::vector<double> directed_surface_distances(const SurfacePointSet &from, const SurfacePointSet &to,
                                               const GridGeometry &geometry) {
    if (from.points.empty() || to.points.empty()) throw std::invalid_argument("surface distance: empty point set");
    const BucketIndex index(to, geometry);
    std::vector<double> d(from.points.size());
    for (std::size_t p = 0; p < d.size(); ++p) d[p] = std::sqrt(index.nearest_squared(from.voxels[p], from.points[p]));
    return d;
}

std::vector<double> pooled_surface_distances(const BinaryMask &a, const BinaryMask &b) {
    check_pair(a, b, "surface distance");
    const auto sa = extract_surface(a), sb = extract_surface(b);
    auto d = directed_surface_distances(sa, sb, a.geometry);
    const auto back = directed_surface_distances(sb, sa, a.geometry);
    d.insert(d.end(), back.begin(), back.end());
    return d;
}

double hd95(const BinaryMask &a, const BinaryMask &b) {
    return percentile_nearest_rank(pooled_surface_distances(a, b), 95.0);
}

double mda(const BinaryMask &a, const BinaryMask &b) {
    check_pair(a, b, "surface distance");
    const auto sa = extract_surface(a), sb = extract_surface(b);
    // Each direction summed on its own so that swapping the arguments is exact.
    double ab = 0.0, ba = 0.0;
    for (double x : directed_surface_distances(sa, sb, a.geometry)) ab += x;
    for (double x : directed_surface_distances(sb, sa, a.geometry)) ba += x;
    return (ab + ba) / static_cast<double>(sa.points.size() + sb.points.size());
}

} // namespace segreg
