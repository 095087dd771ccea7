#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smallgain/errors.hpp"

namespace smallgain {

// Structural tail of the interconnection gains: every row i beyond the
// explicit prefix has gamma(i, i+k) = coeff for each listed offset k != 0.
// An empty offset list is the eventually-zero tail. Restricting tails to this
// family keeps column sums and the mu-tail checks closed-form.
struct ToeplitzTail {
    std::vector<std::pair<int, double>> offsets;
};

// Decay rates lambda_i, interconnection gains gamma_ij, input gains gamma_iu,
// and the uniform bounds that the certificates consume. All rules are an
// explicit prefix plus a constant (or Toeplitz) tail.
class GainSpec {
public:
    struct Bounds {
        double lambda_lo = 0.0;
        double lambda_hi = 0.0;
        double gamma_u_hi = 0.0;
        double alpha_lo = 1.0;
        double alpha_hi = 1.0;
    };
    // Sparse explicit row: (column j, gamma_ij) pairs.
    using Row = std::vector<std::pair<std::size_t, double>>;

    GainSpec(std::vector<double> lambda_prefix, double lambda_tail,
             std::vector<Row> gamma_rows, ToeplitzTail gamma_tail,
             std::vector<double> gamma_u_prefix, double gamma_u_tail,
             Bounds bounds);

    double lambda(std::size_t i) const {
        return i < lambda_prefix_.size() ? lambda_prefix_[i] : lambda_tail_;
    }
    double gamma_u(std::size_t i) const {
        return i < gamma_u_prefix_.size() ? gamma_u_prefix_[i] : gamma_u_tail_;
    }
    double gamma(std::size_t i, std::size_t j) const;

    const std::vector<Row>& gamma_rows() const { return gamma_rows_; }
    const ToeplitzTail& gamma_tail() const { return gamma_tail_; }
    const Bounds& bounds() const { return bounds_; }
    double lambda_tail() const { return lambda_tail_; }
    std::size_t lambda_prefix_size() const { return lambda_prefix_.size(); }

    // Widest tail offset, at least 1.
    std::size_t tail_bandwidth() const { return bandwidth_; }
    // First index from which lambda, gamma_u and the column structure of
    // gamma are governed purely by the tail rules.
    std::size_t structural_extent() const { return extent_; }

private:
    std::vector<double> lambda_prefix_;
    double lambda_tail_;
    std::vector<Row> gamma_rows_;
    ToeplitzTail gamma_tail_;
    std::vector<double> gamma_u_prefix_;
    double gamma_u_tail_;
    Bounds bounds_;
    std::size_t bandwidth_;
    std::size_t extent_;
};

// Positive weight vector with constant tail, as produced for the certificate.
struct MuVec {
    std::vector<double> prefix;
    double tail = 1.0;
    double lo = 1.0;
    double hi = 1.0;

    double at(std::size_t i) const {
        return i < prefix.size() ? prefix[i] : tail;
    }
    static MuVec ones() { return MuVec{{}, 1.0, 1.0, 1.0}; }
};

// The gain operator Psi = Lambda^{-1} Gamma with views of its N x N leading
// principal truncations. Entries psi_ij = gamma_ij / lambda_i >= 0.
class GainOperator {
public:
    explicit GainOperator(GainSpec spec);

    const GainSpec& spec() const { return spec_; }
    double psi(std::size_t i, std::size_t j) const {
        return spec_.gamma(i, j) / spec_.lambda(i);
    }

    // Compressed rows of the truncation Psi_N.
    struct Truncation {
        std::size_t n = 0;
        std::vector<std::size_t> offsets;
        std::vector<std::size_t> cols;
        std::vector<double> vals;
        double max_row_sum = 0.0;
        void apply(std::span<const double> x, std::span<double> y) const;
    };
    Truncation truncation(std::size_t n) const;

    // Exact column sum of Gamma over all rows (the tail contributes a closed
    // form), and its value for every column beyond the influenced zone.
    double gamma_column_sum(std::size_t j) const;
    double gamma_colsum_limit() const;

    // sum_j mu_j * gamma_ji for the weighted-column checks; mu is read through
    // its constant tail.
    double weighted_gamma_column(const MuVec& mu, std::size_t i) const;
    // Same for Psi: sum_j mu_j * psi_ji.
    double weighted_psi_column(const MuVec& mu, std::size_t i) const;

private:
    GainSpec spec_;
    std::map<std::size_t, GainSpec::Row> cols_;  // transpose of explicit rows
};

struct ColumnSumReport {
    std::vector<double> estimates;  // sup_{j<N} column sum, per schedule entry
    double limit = 0.0;             // exact sup over all columns
    bool bounded = true;            // limit below the configured cap
    double cap = 0.0;
};

// Monotone estimates of the (1,1)-norm of Gamma (sup of column sums) per
// truncation size, plus the exact structural limit.
ColumnSumReport gamma_norm_11(const GainOperator& op,
                              std::span<const std::size_t> schedule,
                              double cap = 1e12);

struct PowerIterOptions {
    double rel_tol = 1e-10;
    std::size_t max_iter = 1000000;
    double shift_factor = 0.05;
    std::size_t stagnation_window = 256;
};

struct TruncationBound {
    std::size_t n = 0;
    double lower = 0.0;        // certified lower bound on r(Psi_n), hence on r(Psi)
    double upper_local = 0.0;  // certified upper bound on r(Psi_n) only
    std::size_t iterations = 0;
    bool converged = false;
};

struct SpectralRadiusResult {
    std::vector<TruncationBound> per_n;
    double r_hat = 0.0;                // largest certified lower bound
    bool successive_converged = false; // last two lower bounds differ < tol
    double tol = 0.0;
};

// Certified lower bounds on r(Psi) from nonnegative truncations. Each bound
// comes from the two-sided positive-vector inequality maintained along a
// shifted power iteration started at the all-ones vector.
SpectralRadiusResult spectral_radius(const GainOperator& op,
                                     std::span<const std::size_t> schedule,
                                     double tol = 1e-6,
                                     const PowerIterOptions& opts = {});

enum class MuStatus {
    ok,                   // certificate verified and the r_hat decay bound met
    bound_violation,      // certificate verified, but lambda_inf falls short of
                          // (1 - r_hat) * lambda_lo - rho; r_hat is likely loose
    verification_failed,  // no positive decay margin
};

struct MuResult {
    MuVec mu;
    double s = 0.0;            // series parameter, (1 + r_hat)/2
    std::size_t terms = 0;     // number of series terms applied
    bool tail_bound_met = false;
    double lambda_inf = 0.0;   // min over i of lambda_i - [mu^T Gamma]_i / mu_i
    double worst_margin = 0.0;
    std::size_t worst_index = 0;
    double lemma_bound = 0.0;  // (1 - r_hat) * lambda_lo - rho
    bool meets_lemma_bound = false;
    double rho = 0.0;
    double r_hat = 0.0;
    MuStatus status = MuStatus::verification_failed;
    std::string diagnostics;
};

// Builds mu by the truncated dual Neumann series mu^T = sum_k s^{-k} 1^T Psi^k
// with s = (1 + r_hat)/2, then verifies the componentwise decay inequality
// [mu^T(-Lambda + Gamma)]_i <= -lambda_inf * mu_i at every explicit index and
// on the tail rule. The verification, not the series, is the contract.
MuResult compute_mu(const GainOperator& op, double r_hat, double rho = -1.0,
                    std::size_t max_terms = 400);

// True iff [mu^T Psi]_i <= s * mu_i at every explicit index and on the tail
// rule. When true, s is a certified upper bound for r(Psi_N) for every N.
bool upper_bound_certificate(const GainOperator& op, const MuVec& mu, double s);

// The packaged composite-Lyapunov certificate and its trajectory envelope.
struct Certificate {
    MuVec mu;
    double lambda_inf = 0.0;
    double p = 2.0;
    double q = 2.0;
    double input_gain = 0.0;     // mu_hi * gamma_u_hi
    double coercivity_lo = 0.0;  // mu_lo * alpha_lo
    double coercivity_hi = 0.0;  // mu_hi * alpha_hi
    double r_hat = 0.0;
    double r_upper = 0.0;        // certified upper bound on the truncated family
    double overshoot = 1.0;      // M = (coercivity_hi / coercivity_lo)^{1/p}
    double decay_rate = 0.0;     // a = lambda_inf / p

    // Gain applied to |u|_{q,inf} in the trajectory envelope.
    double iss_gain(double r) const;
    // V-level input coefficient: input_gain * r^q.
    double v_input_bound(double r) const { return input_gain * std::pow(r, q); }
};

Certificate assemble_certificate(const GainSpec& gain, const MuResult& mu,
                                 double r_upper, double p, double q);

enum class Verdict { certified, refuted, inconclusive };

struct AnalyzeOptions {
    std::vector<std::size_t> schedule = {8, 16, 32, 64, 128, 256};
    double rho = -1.0;  // negative: use 1e-3 * lambda_lo
    double schedule_tol = 1e-6;
    PowerIterOptions power;
    double colsum_cap = 1e12;
};

struct AnalyzeReport {
    Verdict verdict = Verdict::inconclusive;
    std::string reason;
    ColumnSumReport colsums;
    SpectralRadiusResult radius;
    std::optional<MuResult> mu;
    std::optional<Certificate> certificate;
    double upper_bound = 0.0;  // +inf when no certificate holds
    bool upper_cert = false;
};

// Full small-gain pipeline on a gain spec: boundedness, spectral bracket,
// mu construction, certificate assembly.
AnalyzeReport analyze(const GainOperator& op, double p, double q,
                      const AnalyzeOptions& opts = {});

}  // namespace smallgain
