#include "segreg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace segreg {

std::string_view to_string(TestMethod m) { return m == TestMethod::exact ? "exact" : "normal-approx"; }

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // positions i+1 .. j share their mean rank
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
        i = j;
    }
    return ranks;
}

namespace {

void require_finite(std::span<const double> v, const char *what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite observation");
}

// Sum over tie groups of t^3 - t.
double tie_term(std::span<const double> values) {
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    double acc = 0.0;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t j = i + 1;
        while (j < s.size() && s[j] == s[i]) ++j;
        const double t = static_cast<double>(j - i);
        acc += t * t * t - t;
        i = j;
    }
    return acc;
}

double normal_two_sided(double deviation, double variance) {
    if (!(variance > 0.0)) return 1.0;
    const double z = std::max(0.0, std::abs(deviation) - 0.5) / std::sqrt(variance);
    return std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
}

// Ranks are multiples of 1/2, so twice the rank is an exact integer.
std::vector<long> doubled(const std::vector<double> &ranks) {
    std::vector<long> out;
    out.reserve(ranks.size());
    for (double r : ranks) out.push_back(std::lround(2.0 * r));
    return out;
}

} // namespace

TestResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, const StatOptions &opt) {
    if (x.size() != y.size()) throw std::invalid_argument("signed-rank: samples differ in length");
    if (x.empty()) throw std::invalid_argument("signed-rank: empty samples");
    require_finite(x, "signed-rank");
    require_finite(y, "signed-rank");

    std::vector<double> mag;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d == 0.0) continue;
        mag.push_back(std::abs(d));
        positive.push_back(d > 0.0);
    }
    TestResult r;
    r.n_effective = static_cast<int>(mag.size());
    if (mag.empty()) {
        r.degenerate = true;
        return r;
    }
    const auto ranks = average_ranks(mag);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (positive[i]) w_plus += ranks[i];
    r.statistic = w_plus;
    const double n = static_cast<double>(mag.size());

    if (r.n_effective <= opt.signed_rank_exact_max) {
        // Distribution of twice W+ over all 2^n sign assignments.
        const auto r2 = doubled(ranks);
        const long total = std::accumulate(r2.begin(), r2.end(), 0L);
        std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
        count[0] = 1.0;
        long reach = 0;
        for (long v : r2) {
            for (long s = reach; s >= 0; --s)
                if (count[s] != 0.0) count[s + v] += count[s];
            reach += v;
        }
        const long observed = std::lround(2.0 * w_plus);
        const long dev = std::abs(2 * observed - total);
        double hits = 0.0;
        for (long s = 0; s <= total; ++s)
            if (std::abs(2 * s - total) >= dev) hits += count[s];
        r.p_value = std::clamp(hits / std::ldexp(1.0, r.n_effective), 0.0, 1.0);
        r.method = TestMethod::exact;
    } else {
        const double mean = n * (n + 1.0) / 4.0;
        const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(mag) / 48.0;
        r.p_value = normal_two_sided(w_plus - mean, var);
        r.method = TestMethod::normal_approx;
    }
    return r;
}

TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, const StatOptions &opt) {
    if (a.empty() || b.empty()) throw std::invalid_argument("rank-sum: empty sample");
    require_finite(a, "rank-sum");
    require_finite(b, "rank-sum");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = average_ranks(pooled);
    const std::size_t na = a.size(), nb = b.size(), nt = pooled.size();
    double ra = 0.0;
    for (std::size_t i = 0; i < na; ++i) ra += ranks[i];

    TestResult r;
    r.n_effective = static_cast<int>(nt);
    r.statistic = ra - static_cast<double>(na) * (na + 1.0) / 2.0;

    if (r.n_effective <= opt.rank_sum_exact_max) {
        // count[k][s]: subsets of size k whose doubled rank sum is s.
        const auto r2 = doubled(ranks);
        const long total = std::accumulate(r2.begin(), r2.end(), 0L);
        std::vector<std::vector<double>> count(na + 1, std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
        count[0][0] = 1.0;
        for (long v : r2) {
            for (std::size_t k = na; k >= 1; --k)
                for (long s = total - v; s >= 0; --s)
                    if (count[k - 1][s] != 0.0) count[k][s + v] += count[k - 1][s];
        }
        // E[2 R_a] = na (N + 1)
        const long expected = static_cast<long>(na * (nt + 1));
        const long dev = std::abs(std::lround(2.0 * ra) - expected);
        double hits = 0.0, all = 0.0;
        for (long s = 0; s <= total; ++s) {
            all += count[na][s];
            if (std::abs(s - expected) >= dev) hits += count[na][s];
        }
        r.p_value = std::clamp(hits / all, 0.0, 1.0);
        r.method = TestMethod::exact;
    } else {
        const double fa = static_cast<double>(na), fb = static_cast<double>(nb), fn = static_cast<double>(nt);
        const double var = fa * fb / 12.0 * ((fn + 1.0) - tie_term(pooled) / (fn * (fn - 1.0)));
        r.p_value = normal_two_sided(r.statistic - fa * fb / 2.0, var);
        r.method = TestMethod::normal_approx;
    }
    return r;
}

} // namespace segreg
