#pragma once
// Statistical engine: Fisher's exact test, Cohen's h, odds ratios with Wald
// CIs and the Haldane-Anscombe correction, the Cochran-Mantel-Haenszel test
// with Robins-Breslow-Greenland intervals, seeded Monte-Carlo Bayes factors,
// and the relative-tolerance regression check. All pure and deterministic.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace blicket {

class StatsError : public std::runtime_error {
public:
    explicit StatsError(const std::string& what) : std::runtime_error(what) {}
};

// rows = groups, columns = success / failure:
//   group 1: a successes, b failures
//   group 2: c successes, d failures
struct ContingencyTable {
    long long a = 0, b = 0, c = 0, d = 0;
    long long row1() const { return a + b; }
    long long row2() const { return c + d; }
    long long total() const { return a + b + c + d; }
    void validate() const;  // row sums must be positive
};

enum class FisherSided { two_sided, one_tailed_greater };

// Exact hypergeometric tail. Two-sided sums every table whose probability
// does not exceed the observed one; one-tailed-greater sums P(X >= a).
double fisher_exact(const ContingencyTable& t, FisherSided sided);

// 2*(asin(sqrt(p1)) - asin(sqrt(p2))), signed.
double cohens_h(double p1, double p2);

struct OrCi {
    double odds_ratio = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool corrected = false;  // Haldane-Anscombe +0.5 applied (some cell was zero)
};

// OR = ad/bc with a Wald interval on log OR; +0.5 added to every cell when
// any cell count is zero.
OrCi odds_ratio_ci(const ContingencyTable& t, double level = 0.95);

struct CmhResult {
    double chi_square = 0.0;
    double p_value = 1.0;
    double common_or = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    int strata_used = 0;
    std::vector<int> skipped;  // zero-margin strata, skipped with a warning
};

// Mantel-Haenszel chi-square with continuity correction, MH common odds
// ratio, RBG variance for the confidence interval. Needs >= 2 usable strata.
CmhResult cmh(const std::vector<ContingencyTable>& strata, double level = 0.95);

enum class BfConvention { posterior_odds, prob_over_half };

struct BFRequest {
    long long k1 = 0, n1 = 0, k2 = 0, n2 = 0;
    long long draws = 1000000;
    BfConvention convention = BfConvention::posterior_odds;
    std::uint64_t seed = 0;
};

struct BFResult {
    double bf = 0.0;
    double p_greater = 0.0;  // posterior mass of p1 > p2, shared by both conventions
};

// p1 ~ Beta(k1+1, n1-k1+1), p2 ~ Beta(k2+1, n2-k2+1) under uniform priors;
// posterior_odds returns P/(1-P), prob_over_half returns P/0.5, both from
// identical draws.
BFResult bayes_factor(const BFRequest& req);

struct RegressionFailure {
    std::string key;
    double reference = 0.0;
    double recomputed = 0.0;
    double relative_diff = 0.0;
};

struct RegressionOutcome {
    bool pass = true;
    std::vector<RegressionFailure> failures;
};

// Per-key relative comparison; key sets must match exactly.
RegressionOutcome regression_check(const std::map<std::string, double>& reference,
                                   const std::map<std::string, double>& recomputed,
                                   double tolerance = 0.002);

// inverse standard normal CDF (used for CI levels other than 0.95)
double normal_quantile(double p);

}  // namespace blicket
