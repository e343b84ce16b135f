#include "netlens/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "netlens/errors.hpp"

namespace netlens {

namespace {

double frobenius(const DMatrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

// KS sup-distance between the empirical CDF of sorted samples and a model CDF.
double ks_distance(const std::vector<double>& sorted, const std::function<double(double)>& cdf) {
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        double f = cdf(sorted[i]);
        d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
        d = std::max(d, std::abs(static_cast<double>(i) / n - f));
    }
    return d;
}

double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

} // namespace

DMatrix activation_matrix(const ActivationTrace& trace, const std::string& layer) {
    const Tensor& t = trace.at(layer);
    if (t.shape.size() == 4) {
        const std::size_t n = t.shape[0], c = t.shape[1], h = t.shape[2], w = t.shape[3];
        DMatrix m(n * h * w, c);
        std::size_t row = 0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x, ++row)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        m.at(row, ch) = t.data[t.offset4(b, ch, y, x)];
        return m;
    }
    if (t.shape.size() == 2) {
        DMatrix m(t.shape[0], t.shape[1]);
        for (std::size_t i = 0; i < t.data.size(); ++i) m.data[i] = t.data[i];
        return m;
    }
    throw ContractError(layer + ": activation rank " + std::to_string(t.shape.size()) +
                        " not supported for spectral analysis");
}

DMatrix covariance(const DMatrix& x, bool centered) {
    if (x.rows < 2)
        throw ContractError("covariance: need at least 2 observations, got " +
                            std::to_string(x.rows));
    const std::size_t m = x.rows, d = x.cols;
    std::vector<double> mean(d, 0.0);
    if (centered) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
        for (double& v : mean) v /= static_cast<double>(m);
    }
    const double scale = centered ? 1.0 / static_cast<double>(m - 1)
                                  : 1.0 / static_cast<double>(m);
    DMatrix cov(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                s += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]);
            s *= scale;
            cov.at(a, b) = s;
            cov.at(b, a) = s;
        }
    return cov;
}

EigenDecomposition eig_sym(const DMatrix& m) {
    if (m.rows != m.cols)
        throw ContractError("eig_sym: matrix is not square");
    const std::size_t n = m.rows;
    const double norm = frobenius(m);
    const double sym_tol = 1e-8 * std::max(1.0, norm);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(m.at(i, j) - m.at(j, i)) > sym_tol)
                throw ContractError("eig_sym: matrix is not symmetric at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");

    DMatrix a = m;
    DMatrix q(n, n);
    for (std::size_t i = 0; i < n; ++i) q.at(i, i) = 1.0;

    const double off_tol = 1e-12 * norm;
    bool converged = norm == 0.0 || n == 1;
    for (std::size_t sweep = 0; sweep < 100 && !converged; ++sweep) {
        double max_off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t r = p + 1; r < n; ++r) {
                double apq = a.at(p, r);
                max_off = std::max(max_off, std::abs(apq));
                if (apq == 0.0) continue;

                double theta = (a.at(r, r) - a.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a.at(k, p), akq = a.at(k, r);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, r) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a.at(p, k), aqk = a.at(r, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(r, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double qkp = q.at(k, p), qkq = q.at(k, r);
                    q.at(k, p) = c * qkp - s * qkq;
                    q.at(k, r) = s * qkp + c * qkq;
                }
            }
        if (max_off < off_tol) converged = true;
    }
    if (!converged) {
        // one final check: the last sweep may have pushed it under tolerance
        double max_off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t r = p + 1; r < n; ++r)
                max_off = std::max(max_off, std::abs(a.at(p, r)));
        if (max_off >= off_tol)
            throw NumericError("eig_sym: Jacobi iteration did not converge in 100 sweeps");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a.at(i, i) < a.at(j, j); });

    EigenDecomposition dec;
    dec.eigenvalues.resize(n);
    dec.eigenvectors = DMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        dec.eigenvalues[j] = a.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) dec.eigenvectors.at(i, j) = q.at(i, order[j]);
    }
    return dec;
}

EigenSpectrum spectrum_of(const ActivationTrace& trace, const std::string& layer,
                          bool centered) {
    DMatrix obs = activation_matrix(trace, layer);
    DMatrix cov = covariance(obs, centered);
    EigenDecomposition dec = eig_sym(cov);
    EigenSpectrum spec;
    spec.layer = layer;
    spec.eigenvalues = std::move(dec.eigenvalues);
    spec.m = obs.rows;
    spec.d = obs.cols;
    return spec;
}

std::size_t nearest_rank_index(double quantile_percent, std::size_t n) {
    if (n == 0)
        throw ContractError("nearest_rank_index: empty spectrum");
    // ceil(q*n) in exact integer arithmetic over permille to avoid float
    // boundary drift
    auto permille = static_cast<std::size_t>(std::llround(quantile_percent * 10.0));
    std::size_t idx = (permille * n + 999) / 1000;
    return std::clamp<std::size_t>(idx, 1, n);
}

double condition_number(const EigenSpectrum& spectrum) {
    const auto& ev = spectrum.eigenvalues;
    if (ev.empty())
        throw ContractError("condition_number: empty spectrum");
    std::vector<double> sorted = ev;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    double hi = std::abs(sorted[nearest_rank_index(99.9, n) - 1]);
    double lo = std::abs(sorted[nearest_rank_index(90.0, n) - 1]);
    if (lo < 1e-12)
        throw DegenerateSpectrumError(spectrum.layer +
                                      ": 90th-percentile eigenvalue magnitude is zero");
    return hi / lo;
}

std::vector<double> symmetrize_density(const EigenSpectrum& spectrum, std::size_t bins) {
    if (bins < 2)
        throw ContractError("symmetrize_density: need at least 2 bins");
    const auto& ev = spectrum.eigenvalues;
    if (ev.empty())
        throw ContractError("symmetrize_density: empty spectrum");

    double max_abs = 0.0;
    for (double v : ev) max_abs = std::max(max_abs, std::abs(v));
    std::vector<double> hist(bins, 0.0);
    const double mass = 0.5 / static_cast<double>(ev.size());
    if (max_abs == 0.0) {
        // all-zero spectrum: the 0/-0 pairs straddle the centre
        std::size_t mid_right = bins / 2;
        hist[mid_right] += 0.5;
        hist[bins - 1 - mid_right] += 0.5;
        return hist;
    }
    const double width = 2.0 * max_abs / static_cast<double>(bins);
    for (double v : ev) {
        double a = std::abs(v);
        auto idx = static_cast<std::size_t>((a + max_abs) / width);
        if (idx >= bins) idx = bins - 1;
        hist[idx] += mass;
        hist[bins - 1 - idx] += mass;
    }
    return hist;
}

double pareto_cdf(double x, double alpha, double xm) {
    if (x < xm) return 0.0;
    return 1.0 - std::pow(xm / x, alpha);
}

ParetoFit fit_pareto(const std::vector<double>& samples) {
    std::vector<double> xs;
    xs.reserve(samples.size());
    for (double v : samples)
        if (v > 1e-12) xs.push_back(v);
    if (xs.size() < 2)
        throw ContractError("fit_pareto: need at least 2 positive samples after filtering, got " +
                            std::to_string(xs.size()));
    std::sort(xs.begin(), xs.end());
    const double xm = xs.front();
    double log_sum = 0.0;
    for (double v : xs) log_sum += std::log(v / xm);
    if (log_sum <= 0.0)
        throw DivergentAlphaError("fit_pareto: zero log-spread (all samples equal)");

    ParetoFit fit;
    fit.xm = xm;
    fit.n = xs.size();
    fit.alpha = static_cast<double>(xs.size()) / log_sum;
    fit.ks_statistic =
        ks_distance(xs, [&](double x) { return pareto_cdf(x, fit.alpha, fit.xm); });
    return fit;
}

FitReport fit_best_distribution(const std::vector<double>& samples) {
    std::vector<double> xs;
    xs.reserve(samples.size());
    for (double v : samples)
        if (v > 1e-12) xs.push_back(v);
    if (xs.size() < 2)
        throw ContractError("fit_best_distribution: need at least 2 positive samples");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());

    FitReport report;
    report.n = xs.size();
    report.low_confidence = xs.size() < 30;

    auto add = [&](FamilyFit fit) { report.ranked.push_back(std::move(fit)); };

    {
        FamilyFit f;
        f.family = "pareto";
        try {
            ParetoFit p = fit_pareto(xs);
            f.params = {{"alpha", p.alpha}, {"xm", p.xm}};
            f.ks_statistic = p.ks_statistic;
            f.ok = true;
        } catch (const ContractError& e) {
            f.error = e.what();
        }
        add(std::move(f));
    }
    {
        FamilyFit f;
        f.family = "exponential";
        double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
        if (mean > 0.0) {
            double rate = 1.0 / mean;
            f.params = {{"rate", rate}};
            f.ks_statistic =
                ks_distance(xs, [&](double x) { return 1.0 - std::exp(-rate * x); });
            f.ok = true;
        } else {
            f.error = "non-positive mean";
        }
        add(std::move(f));
    }
    {
        FamilyFit f;
        f.family = "lognormal";
        double mu = 0.0;
        for (double v : xs) mu += std::log(v);
        mu /= n;
        double var = 0.0;
        for (double v : xs) var += (std::log(v) - mu) * (std::log(v) - mu);
        var /= n;
        if (var > 0.0) {
            double sigma = std::sqrt(var);
            f.params = {{"mu", mu}, {"sigma", sigma}};
            f.ks_statistic =
                ks_distance(xs, [&](double x) { return normal_cdf(std::log(x), mu, sigma); });
            f.ok = true;
        } else {
            f.error = "degenerate log-variance";
        }
        add(std::move(f));
    }
    {
        FamilyFit f;
        f.family = "normal";
        double mu = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
        double var = 0.0;
        for (double v : xs) var += (v - mu) * (v - mu);
        var /= n;
        if (var > 0.0) {
            double sigma = std::sqrt(var);
            f.params = {{"mu", mu}, {"sigma", sigma}};
            f.ks_statistic = ks_distance(xs, [&](double x) { return normal_cdf(x, mu, sigma); });
            f.ok = true;
        } else {
            f.error = "degenerate variance";
        }
        add(std::move(f));
    }

    std::stable_sort(report.ranked.begin(), report.ranked.end(),
                     [](const FamilyFit& a, const FamilyFit& b) {
                         if (a.ok != b.ok) return a.ok; // failures rank last
                         return a.ks_statistic < b.ks_statistic;
                     });
    return report;
}

} // namespace netlens
