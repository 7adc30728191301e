#include "blicket/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blicket/rng.hpp"

namespace blicket {

void ContingencyTable::validate() const {
    if (a < 0 || b < 0 || c < 0 || d < 0) throw StatsError("negative cell count");
    if (row1() == 0 || row2() == 0) throw StatsError("empty-margin: zero row sum");
}

namespace {

double log_choose(long long n, long long k) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

}  // namespace

double fisher_exact(const ContingencyTable& t, FisherSided sided) {
    t.validate();
    const long long r1 = t.row1(), r2 = t.row2();
    const long long c1 = t.a + t.c;  // success column margin
    const long long n = t.total();
    const long long lo = std::max(0LL, c1 - r2);
    const long long hi = std::min(r1, c1);

    const double log_denominator = log_choose(n, c1);
    auto log_prob = [&](long long k) {
        return log_choose(r1, k) + log_choose(r2, c1 - k) - log_denominator;
    };

    const double observed = log_prob(t.a);
    double p = 0.0;
    if (sided == FisherSided::one_tailed_greater) {
        for (long long k = t.a; k <= hi; ++k) p += std::exp(log_prob(k));
    } else {
        // sum of all tables no more probable than the observed one
        const double cutoff = observed + 1e-7;  // relative fuzz for fp ties
        for (long long k = lo; k <= hi; ++k) {
            const double lp = log_prob(k);
            if (lp <= cutoff) p += std::exp(lp);
        }
    }
    return std::min(p, 1.0);
}

double cohens_h(double p1, double p2) {
    if (p1 < 0.0 || p1 > 1.0 || p2 < 0.0 || p2 > 1.0) {
        throw StatsError("out-of-range proportion for Cohen's h");
    }
    return 2.0 * (std::asin(std::sqrt(p1)) - std::asin(std::sqrt(p2)));
}

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw StatsError("normal quantile requires p in (0, 1)");
    // Acklam's rational approximation, |relative error| < 1.15e-9
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

OrCi odds_ratio_ci(const ContingencyTable& t, double level) {
    t.validate();
    OrCi out;
    double a = static_cast<double>(t.a), b = static_cast<double>(t.b);
    double c = static_cast<double>(t.c), d = static_cast<double>(t.d);
    if (t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0) {
        a += 0.5;
        b += 0.5;
        c += 0.5;
        d += 0.5;
        out.corrected = true;
    }
    out.odds_ratio = (a * d) / (b * c);
    const double se = std::sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d);
    const double z = normal_quantile(0.5 + level / 2.0);
    out.lower = std::exp(std::log(out.odds_ratio) - z * se);
    out.upper = std::exp(std::log(out.odds_ratio) + z * se);
    return out;
}

CmhResult cmh(const std::vector<ContingencyTable>& strata, double level) {
    CmhResult out;
    double sum_a = 0.0, sum_e = 0.0, sum_v = 0.0;
    double sum_r = 0.0, sum_s = 0.0;
    double sum_pr = 0.0, sum_ps_qr = 0.0, sum_qs = 0.0;

    for (std::size_t i = 0; i < strata.size(); ++i) {
        const ContingencyTable& t = strata[i];
        const double a = static_cast<double>(t.a), b = static_cast<double>(t.b);
        const double c = static_cast<double>(t.c), d = static_cast<double>(t.d);
        const double n1 = a + b, n2 = c + d;
        const double m1 = a + c, m0 = b + d;
        const double total = n1 + n2;
        if (n1 == 0 || n2 == 0 || m1 == 0 || m0 == 0 || total < 2) {
            out.skipped.push_back(static_cast<int>(i));  // degenerate stratum
            continue;
        }
        ++out.strata_used;
        sum_a += a;
        sum_e += n1 * m1 / total;
        sum_v += n1 * n2 * m1 * m0 / (total * total * (total - 1.0));

        const double r = a * d / total;
        const double s = b * c / total;
        const double p = (a + d) / total;
        const double q = (b + c) / total;
        sum_r += r;
        sum_s += s;
        sum_pr += p * r;
        sum_ps_qr += p * s + q * r;
        sum_qs += q * s;
    }
    if (out.strata_used < 2) throw StatsError("cmh requires >= 2 usable strata");

    const double numerator = std::abs(sum_a - sum_e) - 0.5;  // continuity correction
    const double corrected = std::max(numerator, 0.0);
    out.chi_square = corrected * corrected / sum_v;
    out.p_value = std::erfc(std::sqrt(out.chi_square / 2.0));  // chi-square(1) upper tail

    out.common_or = sum_r / sum_s;
    const double variance = sum_pr / (2.0 * sum_r * sum_r) +
                            sum_ps_qr / (2.0 * sum_r * sum_s) + sum_qs / (2.0 * sum_s * sum_s);
    const double z = normal_quantile(0.5 + level / 2.0);
    const double log_or = std::log(out.common_or);
    out.ci_lower = std::exp(log_or - z * std::sqrt(variance));
    out.ci_upper = std::exp(log_or + z * std::sqrt(variance));
    return out;
}

BFResult bayes_factor(const BFRequest& req) {
    if (req.k1 < 0 || req.k2 < 0 || req.k1 > req.n1 || req.k2 > req.n2) {
        throw StatsError("bayes_factor requires 0 <= k <= n");
    }
    if (req.draws < 1) throw StatsError("bayes_factor requires draws >= 1");
    Rng rng(req.seed);
    const double a1 = static_cast<double>(req.k1) + 1.0;
    const double b1 = static_cast<double>(req.n1 - req.k1) + 1.0;
    const double a2 = static_cast<double>(req.k2) + 1.0;
    const double b2 = static_cast<double>(req.n2 - req.k2) + 1.0;
    long long wins = 0;
    for (long long i = 0; i < req.draws; ++i) {
        const double p1 = rng.beta(a1, b1);
        const double p2 = rng.beta(a2, b2);
        if (p1 > p2) ++wins;
    }
    BFResult out;
    out.p_greater = static_cast<double>(wins) / static_cast<double>(req.draws);
    if (req.convention == BfConvention::posterior_odds) {
        out.bf = out.p_greater == 1.0 ? std::numeric_limits<double>::infinity()
                                      : out.p_greater / (1.0 - out.p_greater);
    } else {
        out.bf = out.p_greater / 0.5;
    }
    return out;
}

RegressionOutcome regression_check(const std::map<std::string, double>& reference,
                                   const std::map<std::string, double>& recomputed,
                                   double tolerance) {
    for (const auto& [key, value] : reference) {
        if (!recomputed.count(key)) throw StatsError("key-mismatch: missing recomputed value for " + key);
    }
    for (const auto& [key, value] : recomputed) {
        if (!reference.count(key)) throw StatsError("key-mismatch: unexpected recomputed key " + key);
    }
    RegressionOutcome out;
    for (const auto& [key, ref] : reference) {
        const double rec = recomputed.at(key);
        const double scale = std::max(std::abs(ref), 1e-300);
        const double rel = std::abs(ref - rec) / scale;
        if (rel > tolerance) {
            out.pass = false;
            out.failures.push_back({key, ref, rec, rel});
        }
    }
    return out;
}

}  // namespace blicket
