#include "trendmine/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace trendmine::stats {

namespace {

constexpr double kTiny = 1e-300;

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Continued fraction for the incomplete beta function (Lentz's method).
double beta_continued_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h;
}

// Series expansion of P(a, x) for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x), x >= a + 1.
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double regularized_gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double student_t_two_sided_p(double t, int df) {
    if (df < 1) throw numeric_error("t distribution needs df >= 1");
    if (!std::isfinite(t)) return 0.0;
    const double nu = static_cast<double>(df);
    return regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

double chi_squared_upper_p(double x, int df) {
    if (df < 1) throw numeric_error("chi-squared distribution needs df >= 1");
    if (x <= 0.0) return 1.0;
    return regularized_gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

double normal_two_sided_p(double z) {
    return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

CorrResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw input_error("correlation inputs differ in length: " +
                          std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    const size_t n = x.size();
    if (n < 3) throw input_error("correlation needs at least 3 observations");

    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
        throw numeric_error("correlation input has zero variance");

    CorrResult result;
    result.n = static_cast<int>(n);
    result.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (std::fabs(result.r) >= 1.0) {
        result.p_two_sided = 0.0;
    } else {
        const double t = result.r * std::sqrt(static_cast<double>(n - 2)) /
                         std::sqrt(1.0 - result.r * result.r);
        result.p_two_sided = student_t_two_sided_p(t, static_cast<int>(n) - 2);
    }
    return result;
}

std::vector<double> average_ranks(std::span<const double> values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

CorrResult spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw input_error("correlation inputs differ in length: " +
                          std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    return pearson(rx, ry);
}

DeviationScoreSet deviation_scores(const std::map<std::string, double>& raw,
                                   bool sigma_zero_fallback) {
    if (raw.size() < 2)
        throw input_error("deviation scores need at least 2 students");

    double mu = 0.0;
    for (const auto& [id, value] : raw) mu += value;
    mu /= static_cast<double>(raw.size());

    double ss = 0.0;
    for (const auto& [id, value] : raw) ss += (value - mu) * (value - mu);
    const double sigma = std::sqrt(ss / static_cast<double>(raw.size()));

    DeviationScoreSet out;
    out.mu = mu;
    out.sigma = sigma;
    if (sigma == 0.0) {
        if (!sigma_zero_fallback)
            throw numeric_error("degenerate cohort: all scores equal, sigma = 0");
        out.degenerate_fallback = true;
        for (const auto& [id, value] : raw) out.scores[id] = 50.0;
        return out;
    }
    for (const auto& [id, value] : raw)
        out.scores[id] = 10.0 * (value - mu) / sigma + 50.0;
    return out;
}

std::vector<double> vif(const Eigen::MatrixXd& design) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (p < 2) throw input_error("VIF undefined for fewer than 2 predictors");
    if (n <= p) throw input_error("VIF needs more rows than predictors");

    std::vector<double> out(static_cast<size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::MatrixXd aux(n, p);  // intercept + the other columns
        aux.col(0).setOnes();
        Eigen::Index c = 1;
        for (Eigen::Index k = 0; k < p; ++k)
            if (k != j) aux.col(c++) = design.col(k);

        const Eigen::VectorXd target = design.col(j);
        const Eigen::VectorXd coef = aux.colPivHouseholderQr().solve(target);
        const double sse = (target - aux * coef).squaredNorm();
        const double mean = target.mean();
        const double sst = (target.array() - mean).square().sum();
        if (sst <= 0.0)
            throw numeric_error("VIF undefined: predictor column " + std::to_string(j) +
                                " has zero variance");
        const double unexplained = sse / sst;
        out[static_cast<size_t>(j)] =
            unexplained < 1e-12 ? std::numeric_limits<double>::infinity()
                                : 1.0 / unexplained;
    }
    return out;
}

}  // namespace trendmine::stats
