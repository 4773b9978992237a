#pragma once

// Independent reference implementations used to cross-check library code.

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace psychic_test {

struct BruteScore {
    double precision;
    double recall;
    double f1;
};

/// Set F1 from sorted-vector intersection, with the same empty-set
/// conventions: both empty is a perfect score, one empty side scores zero.
inline BruteScore brute_force_f1(const std::set<std::string>& pred, const std::set<std::string>& gold) {
    std::vector<std::string> a(pred.begin(), pred.end()), b(gold.begin(), gold.end()), common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    if (a.empty() && b.empty()) return {1.0, 1.0, 1.0};
    double tp = static_cast<double>(common.size());
    double p = a.empty() ? 0.0 : tp / static_cast<double>(a.size());
    double r = b.empty() ? 0.0 : tp / static_cast<double>(b.size());
    double f = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    return {p, r, f};
}

/// Random subset of a 10-symbol alphabet with 0..6 elements.
inline std::set<std::string> random_symbol_set(std::mt19937_64& rng) {
    static const char* kAlphabet[] = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    std::vector<std::string> pool(std::begin(kAlphabet), std::end(kAlphabet));
    std::shuffle(pool.begin(), pool.end(), rng);
    auto n = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
    return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n)};
}

/// Counts non-overlapping occurrences of `needle`.
inline std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

/// Truncation to two decimals computed digit by digit on the scaled integer.
inline double truncate_two_decimals_reference(long long numerator, long long denominator) {
    long long scaled = numerator * 10000 / denominator;
    return static_cast<double>(scaled) / 100.0;
}

} // namespace psychic_test
