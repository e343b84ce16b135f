#ifndef NETLENS_SPECTRA_HPP
#define NETLENS_SPECTRA_HPP

#include <map>
#include <string>
#include <vector>

#include "netlens/network.hpp"

namespace netlens {

// Small dense row-major double matrix; sized for per-layer channel
// covariances, not for general linear algebra.
struct DMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    DMatrix() = default;
    DMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct EigenSpectrum {
    std::string layer;
    std::vector<double> eigenvalues; // ascending
    std::size_t m = 0;               // observations
    std::size_t d = 0;               // features
};

struct EigenDecomposition {
    std::vector<double> eigenvalues; // ascending
    DMatrix eigenvectors;            // columns, matching eigenvalue order
};

struct ConditionReport {
    std::vector<std::pair<std::string, double>> kappa_by_layer; // network order
};

struct ParetoFit {
    double alpha = 0.0;
    double xm = 0.0;
    std::size_t n = 0;
    double ks_statistic = 0.0;
};

struct FamilyFit {
    std::string family; // pareto | exponential | lognormal | normal
    std::map<std::string, double> params;
    double ks_statistic = 0.0;
    bool ok = false;
    std::string error;
};

struct FitReport {
    std::vector<FamilyFit> ranked; // ascending KS; failed families last
    bool low_confidence = false;   // n < 30
    std::size_t n = 0;

    const FamilyFit& best() const { return ranked.front(); }
};

// (N,C,H,W) activations become an (N*H*W) x C observation matrix; (N,F)
// stays N x F.
DMatrix activation_matrix(const ActivationTrace& trace, const std::string& layer);

// Feature-feature second moment: centered covariance (1/(m-1)) X'X by
// default, uncentered Gram (1/m) X'X otherwise. m must be >= 2.
DMatrix covariance(const DMatrix& observations, bool centered = true);

// Cyclic Jacobi sweeps until max off-diagonal < 1e-12 * ||M||_F (at most 100
// sweeps). Input must be symmetric within 1e-8 * max(1, ||M||_F).
EigenDecomposition eig_sym(const DMatrix& m);

EigenSpectrum spectrum_of(const ActivationTrace& trace, const std::string& layer,
                          bool centered = true);

// Nearest-rank percentile: 1-based index ceil(q*n), clamped to [1, n].
std::size_t nearest_rank_index(double quantile_percent, std::size_t n);

// kappa = |lambda at p99.9| / |lambda at p90| over the ascending spectrum.
double condition_number(const EigenSpectrum& spectrum);

// Mass histogram of {lambda} U {-lambda} over [-max|l|, +max|l|]. Negative
// values occupy the mirror bin of their positive twin, so the histogram is
// exactly even-symmetric including boundary values.
std::vector<double> symmetrize_density(const EigenSpectrum& spectrum, std::size_t bins);

// Pareto MLE: xm = min(samples), alpha = n / sum(ln(x/xm)). Values <= 1e-12
// are filtered first.
ParetoFit fit_pareto(const std::vector<double>& samples);

FitReport fit_best_distribution(const std::vector<double>& samples);

double pareto_cdf(double x, double alpha, double xm);

} // namespace netlens

#endif
