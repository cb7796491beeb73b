#pragma once

// Two-sided Wilcoxon signed-rank (paired) and rank-sum (unpaired) tests.

#include <span>
#include <string_view>
#include <vector>

namespace segreg {

enum class TestMethod { exact, normal_approx };

std::string_view to_string(TestMethod m);

struct TestResult {
    double statistic = 0.0; // W+ for signed-rank, U of the first sample for rank-sum
    double p_value = 1.0;
    int n_effective = 0;
    TestMethod method = TestMethod::exact;
    bool degenerate = false; // signed-rank with every difference zero
};

struct StatOptions {
    int signed_rank_exact_max = 25; // exact enumeration up to this many nonzero differences
    int rank_sum_exact_max = 20;    // exact enumeration up to this total sample size
};

/// Average ranks (1-based) of `values`; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Zero differences are dropped before ranking.
TestResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, const StatOptions &opt = {});

TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, const StatOptions &opt = {});

} // namespace segreg
