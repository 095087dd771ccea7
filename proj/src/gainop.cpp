#include "smallgain/gainop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace smallgain {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

double slack_for(double scale) { return 1e-12 * std::max(1.0, std::abs(scale)); }

}  // namespace

GainSpec::GainSpec(std::vector<double> lambda_prefix, double lambda_tail,
                   std::vector<Row> gamma_rows, ToeplitzTail gamma_tail,
                   std::vector<double> gamma_u_prefix, double gamma_u_tail,
                   Bounds bounds)
    : lambda_prefix_(std::move(lambda_prefix)),
      lambda_tail_(lambda_tail),
      gamma_rows_(std::move(gamma_rows)),
      gamma_tail_(std::move(gamma_tail)),
      gamma_u_prefix_(std::move(gamma_u_prefix)),
      gamma_u_tail_(gamma_u_tail),
      bounds_(bounds) {
    require(std::isfinite(bounds_.lambda_lo) && bounds_.lambda_lo > 0.0,
            "lambda lower bound must be positive");
    require(std::isfinite(bounds_.lambda_hi) &&
                bounds_.lambda_hi >= bounds_.lambda_lo,
            "lambda upper bound must be finite and >= the lower bound");
    require(std::isfinite(bounds_.gamma_u_hi) && bounds_.gamma_u_hi > 0.0,
            "input-gain upper bound must be positive and finite");
    require(std::isfinite(bounds_.alpha_lo) && bounds_.alpha_lo > 0.0,
            "coercivity lower bound must be positive");
    require(std::isfinite(bounds_.alpha_hi) &&
                bounds_.alpha_hi >= bounds_.alpha_lo,
            "coercivity upper bound must be finite and >= the lower bound");

    auto check_lambda = [&](double v) {
        require(std::isfinite(v) && v >= bounds_.lambda_lo - slack_for(v) &&
                    v <= bounds_.lambda_hi + slack_for(v),
                "decay rate outside the declared uniform bounds");
    };
    for (double v : lambda_prefix_) check_lambda(v);
    check_lambda(lambda_tail_);

    auto check_gu = [&](double v) {
        require(std::isfinite(v) && v > 0.0 &&
                    v <= bounds_.gamma_u_hi + slack_for(v),
                "input gain outside (0, gamma_u_hi]");
    };
    for (double v : gamma_u_prefix_) check_gu(v);
    check_gu(gamma_u_tail_);

    std::size_t max_col = 0;
    for (std::size_t i = 0; i < gamma_rows_.size(); ++i) {
        auto& row = gamma_rows_[i];
        std::sort(row.begin(), row.end());
        for (std::size_t e = 0; e < row.size(); ++e) {
            require(row[e].first != i, "interconnection gain on the diagonal");
            require(finite_nonneg(row[e].second),
                    "interconnection gains must be finite and nonnegative");
            require(e == 0 || row[e].first != row[e - 1].first,
                    "duplicate column in an interconnection row");
            max_col = std::max(max_col, row[e].first + 1);
        }
    }

    auto& offs = gamma_tail_.offsets;
    std::sort(offs.begin(), offs.end());
    std::size_t max_abs = 0;
    for (std::size_t e = 0; e < offs.size(); ++e) {
        require(offs[e].first != 0, "tail rule places gain on the diagonal");
        require(finite_nonneg(offs[e].second),
                "tail coefficients must be finite and nonnegative");
        require(e == 0 || offs[e].first != offs[e - 1].first,
                "duplicate offset in the tail rule");
        max_abs = std::max(max_abs,
                           static_cast<std::size_t>(std::abs(offs[e].first)));
    }

    bandwidth_ = std::max<std::size_t>(1, max_abs);
    extent_ = std::max({lambda_prefix_.size(), gamma_u_prefix_.size(),
                        gamma_rows_.size() + bandwidth_, max_col});
}

double GainSpec::gamma(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i < gamma_rows_.size()) {
        for (const auto& [col, g] : gamma_rows_[i])
            if (col == j) return g;
        return 0.0;
    }
    const long long k = static_cast<long long>(j) - static_cast<long long>(i);
    for (const auto& [off, c] : gamma_tail_.offsets)
        if (off == k) return c;
    return 0.0;
}

GainOperator::GainOperator(GainSpec spec) : spec_(std::move(spec)) {
    for (std::size_t i = 0; i < spec_.gamma_rows().size(); ++i)
        for (const auto& [j, g] : spec_.gamma_rows()[i])
            cols_[j].emplace_back(i, g);
}

void GainOperator::Truncation::apply(std::span<const double> x,
                                     std::span<double> y) const {
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e)
            acc += vals[e] * x[cols[e]];
        y[i] = acc;
    }
}

GainOperator::Truncation GainOperator::truncation(std::size_t n) const {
    require(n >= 1, "truncation size must be at least 1");
    Truncation t;
    t.n = n;
    t.offsets.assign(n + 1, 0);
    const auto& rows = spec_.gamma_rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double inv_lam = 1.0 / spec_.lambda(i);
        double row_sum = 0.0;
        if (i < rows.size()) {
            for (const auto& [j, g] : rows[i]) {
                if (j >= n) continue;
                t.cols.push_back(j);
                t.vals.push_back(g * inv_lam);
                row_sum += g * inv_lam;
            }
        } else {
            for (const auto& [k, c] : spec_.gamma_tail().offsets) {
                const long long j = static_cast<long long>(i) + k;
                if (j < 0 || j >= static_cast<long long>(n)) continue;
                t.cols.push_back(static_cast<std::size_t>(j));
                t.vals.push_back(c * inv_lam);
                row_sum += c * inv_lam;
            }
        }
        t.offsets[i + 1] = t.cols.size();
        t.max_row_sum = std::max(t.max_row_sum, row_sum);
    }
    return t;
}

double GainOperator::gamma_column_sum(std::size_t j) const {
    double acc = 0.0;
    if (auto it = cols_.find(j); it != cols_.end())
        for (const auto& [i, g] : it->second) acc += g;
    const auto first_tail_row = static_cast<long long>(spec_.gamma_rows().size());
    for (const auto& [k, c] : spec_.gamma_tail().offsets) {
        const long long i = static_cast<long long>(j) - k;
        if (i >= first_tail_row) acc += c;
    }
    return acc;
}

double GainOperator::gamma_colsum_limit() const {
    double tail_sum = 0.0;
    for (const auto& [k, c] : spec_.gamma_tail().offsets) tail_sum += c;
    double sup = tail_sum;
    const std::size_t scan = spec_.structural_extent() + spec_.tail_bandwidth() + 1;
    for (std::size_t j = 0; j < scan; ++j)
        sup = std::max(sup, gamma_column_sum(j));
    return sup;
}

double GainOperator::weighted_gamma_column(const MuVec& mu, std::size_t i) const {
    double acc = 0.0;
    if (auto it = cols_.find(i); it != cols_.end())
        for (const auto& [row, g] : it->second) acc += mu.at(row) * g;
    const auto first_tail_row = static_cast<long long>(spec_.gamma_rows().size());
    for (const auto& [k, c] : spec_.gamma_tail().offsets) {
        const long long row = static_cast<long long>(i) - k;
        if (row >= first_tail_row)
            acc += mu.at(static_cast<std::size_t>(row)) * c;
    }
    return acc;
}

double GainOperator::weighted_psi_column(const MuVec& mu, std::size_t i) const {
    double acc = 0.0;
    if (auto it = cols_.find(i); it != cols_.end())
        for (const auto& [row, g] : it->second)
            acc += mu.at(row) * g / spec_.lambda(row);
    const auto first_tail_row = static_cast<long long>(spec_.gamma_rows().size());
    for (const auto& [k, c] : spec_.gamma_tail().offsets) {
        const long long row = static_cast<long long>(i) - k;
        if (row >= first_tail_row) {
            const auto r = static_cast<std::size_t>(row);
            acc += mu.at(r) * c / spec_.lambda(r);
        }
    }
    return acc;
}

ColumnSumReport gamma_norm_11(const GainOperator& op,
                              std::span<const std::size_t> schedule,
                              double cap) {
    require(cap > 0.0, "column-sum cap must be positive");
    ColumnSumReport rep;
    rep.cap = cap;
    rep.limit = op.gamma_colsum_limit();
    rep.bounded = std::isfinite(rep.limit) && rep.limit <= cap;
    for (std::size_t n : schedule) {
        require(n >= 1, "schedule entries must be at least 1");
        double sup = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            sup = std::max(sup, op.gamma_column_sum(j));
        rep.estimates.push_back(sup);
    }
    return rep;
}

// Two-sided bounds from positivity: for a nonnegative matrix B and x > 0,
//   min_i (Bx)_i / x_i <= r(B) <= max_i (Bx)_i / x_i.
// Applied to B = Psi_n + sigma*I the shift cancels exactly, so the unshifted
// ratios bracket r(Psi_n) at every iterate; iteration only tightens them. The
// shift enters only the iterate update, keeping x strictly positive.
//
// Indices whose rows vanish (directly, or once other vanished indices are
// removed) are discarded first. A zero row contributes only the eigenvalue 0,
// so the radius lives on the surviving principal submatrix; keeping such rows
// would pin the lower ratio at 0 and the bracket could never close.
static TruncationBound power_iteration_bounds(const GainOperator::Truncation& t,
                                              const PowerIterOptions& opts) {
    TruncationBound out;
    out.n = t.n;

    std::vector<char> live(t.n, 1);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < t.n; ++i) {
            if (!live[i]) continue;
            double row = 0.0;
            for (std::size_t e = t.offsets[i]; e < t.offsets[i + 1]; ++e)
                if (live[t.cols[e]]) row += t.vals[e];
            if (row == 0.0) {
                live[i] = 0;
                changed = true;
            }
        }
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < t.n; ++i)
        if (live[i]) keep.push_back(i);
    if (keep.empty()) {
        // Everything trims away: the truncation is nilpotent, r = 0.
        out.converged = true;
        return out;
    }
    GainOperator::Truncation core;
    core.n = keep.size();
    core.max_row_sum = t.max_row_sum;
    std::vector<std::size_t> old2new(t.n, 0);
    for (std::size_t k = 0; k < keep.size(); ++k) old2new[keep[k]] = k;
    core.offsets.push_back(0);
    for (std::size_t i : keep) {
        for (std::size_t e = t.offsets[i]; e < t.offsets[i + 1]; ++e)
            if (live[t.cols[e]]) {
                core.cols.push_back(old2new[t.cols[e]]);
                core.vals.push_back(t.vals[e]);
            }
        core.offsets.push_back(core.cols.size());
    }

    const double sigma = opts.shift_factor * core.max_row_sum;
    std::vector<double> x(core.n, 1.0), y(core.n, 0.0);
    double best_lower = 0.0;
    double best_upper = kInf;
    double last_gap = kInf;
    std::size_t iter = 0;
    while (iter < opts.max_iter) {
        ++iter;
        core.apply(x, y);
        double lo = kInf, hi = 0.0;
        for (std::size_t i = 0; i < core.n; ++i) {
            const double ratio = y[i] / x[i];
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            y[i] += sigma * x[i];
        }
        best_lower = std::max(best_lower, lo);
        best_upper = std::min(best_upper, hi);
        const double gap = best_upper - best_lower;
        if (gap <= opts.rel_tol * std::max(best_upper, 1e-300)) {
            out.converged = true;
            break;
        }
        if (iter % opts.stagnation_window == 0) {
            if (last_gap - gap <= 1e-14 * std::max(1.0, best_upper)) break;
            last_gap = gap;
        }
        double ymax = 0.0;
        for (double v : y) ymax = std::max(ymax, v);
        if (ymax == 0.0) {
            // The iterate annihilated: the truncation is nilpotent on x.
            best_upper = std::max(0.0, best_upper == kInf ? 0.0 : best_upper);
            out.converged = true;
            break;
        }
        for (std::size_t i = 0; i < core.n; ++i) x[i] = y[i] / ymax;
    }
    out.lower = std::max(0.0, best_lower);
    out.upper_local = best_upper == kInf ? 0.0 : std::max(0.0, best_upper);
    out.iterations = iter;
    return out;
}

SpectralRadiusResult spectral_radius(const GainOperator& op,
                                     std::span<const std::size_t> schedule,
                                     double tol,
                                     const PowerIterOptions& opts) {
    require(!schedule.empty(), "truncation schedule must not be empty");
    require(tol > 0.0, "tolerance must be positive");
    SpectralRadiusResult res;
    res.tol = tol;
    for (std::size_t n : schedule) {
        auto t = op.truncation(n);
        res.per_n.push_back(power_iteration_bounds(t, opts));
        res.r_hat = std::max(res.r_hat, res.per_n.back().lower);
    }
    if (res.per_n.size() >= 2) {
        const double last = res.per_n[res.per_n.size() - 1].lower;
        const double prev = res.per_n[res.per_n.size() - 2].lower;
        res.successive_converged = std::abs(last - prev) < tol;
    }
    return res;
}

MuResult compute_mu(const GainOperator& op, double r_hat, double rho,
                    std::size_t max_terms) {
    const GainSpec& spec = op.spec();
    const double lam_lo = spec.bounds().lambda_lo;
    const double lam_hi = spec.bounds().lambda_hi;
    if (rho < 0.0) rho = 1e-3 * lam_lo;
    require(rho > 0.0, "rho must be positive");
    require(r_hat >= 0.0 && r_hat < 1.0,
            "mu construction needs a spectral-radius estimate below 1");
    require(max_terms >= 1, "series needs at least one term");

    MuResult res;
    res.rho = rho;
    res.r_hat = r_hat;
    res.s = 0.5 * (1.0 + r_hat);

    const std::size_t bw = spec.tail_bandwidth();
    const std::size_t w = spec.structural_extent() + (max_terms + 2) * bw + 8;
    const double target = rho * lam_lo / lam_hi;

    double tail_ratio = 0.0;
    for (const auto& [k, c] : spec.gamma_tail().offsets)
        tail_ratio += c / spec.lambda_tail();

    MuVec tau{std::vector<double>(w, 1.0), 1.0, 1.0, 1.0};
    res.mu.prefix.assign(w, 1.0);
    res.mu.tail = 1.0;

    double prev_sup = 1.0;
    std::size_t flat_streak = 0;
    res.terms = 1;
    for (std::size_t k = 1; k <= max_terms; ++k) {
        MuVec next{std::vector<double>(w, 0.0), 0.0, 0.0, 0.0};
        double sup = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            next.prefix[j] = op.weighted_psi_column(tau, j) / res.s;
            sup = std::max(sup, next.prefix[j]);
        }
        next.tail = tau.tail * tail_ratio / res.s;
        sup = std::max(sup, next.tail);
        for (std::size_t j = 0; j < w; ++j) res.mu.prefix[j] += next.prefix[j];
        res.mu.tail += next.tail;
        res.terms = k + 1;
        tau = std::move(next);
        if (sup < target) {
            res.tail_bound_met = true;
            break;
        }
        if (!std::isfinite(sup) || sup > 1e100) break;
        flat_streak = sup >= prev_sup * (1.0 - 1e-9) ? flat_streak + 1 : 0;
        if (k >= 48 && flat_streak >= 24) break;
        prev_sup = sup;
    }

    res.mu.lo = res.mu.tail;
    res.mu.hi = res.mu.tail;
    for (double v : res.mu.prefix) {
        res.mu.lo = std::min(res.mu.lo, v);
        res.mu.hi = std::max(res.mu.hi, v);
    }

    // A-posteriori componentwise verification of the weighted decay
    // inequality; this, not the series, is what the certificate rests on.
    double worst = kInf;
    std::size_t worst_idx = 0;
    for (std::size_t i = 0; i < w; ++i) {
        const double margin =
            spec.lambda(i) - op.weighted_gamma_column(res.mu, i) / res.mu.prefix[i];
        if (margin < worst) {
            worst = margin;
            worst_idx = i;
        }
    }
    double tail_gamma_sum = 0.0;
    for (const auto& [k, c] : spec.gamma_tail().offsets) tail_gamma_sum += c;
    const double tail_margin = spec.lambda_tail() - tail_gamma_sum;
    if (tail_margin < worst) {
        worst = tail_margin;
        worst_idx = w;
    }
    res.lambda_inf = worst;
    res.worst_margin = worst;
    res.worst_index = worst_idx;

    res.lemma_bound = (1.0 - r_hat) * lam_lo - rho;
    res.meets_lemma_bound = res.lambda_inf >= res.lemma_bound - slack_for(res.lemma_bound);

    std::ostringstream diag;
    if (res.lambda_inf <= 0.0) {
        res.status = MuStatus::verification_failed;
        diag << "no positive decay margin: worst margin " << res.lambda_inf
             << " at index " << res.worst_index;
    } else if (!res.meets_lemma_bound) {
        res.status = MuStatus::bound_violation;
        diag << "decay margin " << res.lambda_inf
             << " verified but below the target " << res.lemma_bound
             << "; the spectral-radius lower bound is likely loose";
    } else {
        res.status = MuStatus::ok;
        diag << "decay margin " << res.lambda_inf << " verified against target "
             << res.lemma_bound;
    }
    if (!res.tail_bound_met)
        diag << "; series tail target not reached after " << res.terms
             << " terms";
    res.diagnostics = diag.str();
    return res;
}

bool upper_bound_certificate(const GainOperator& op, const MuVec& mu, double s) {
    require(s > 0.0 && std::isfinite(s), "certificate level must be positive");
    require(mu.tail > 0.0, "mu tail must be positive");
    for (double v : mu.prefix)
        require(v > 0.0, "mu entries must be positive");

    const GainSpec& spec = op.spec();
    const std::size_t extent =
        std::max(mu.prefix.size(), spec.structural_extent()) +
        spec.tail_bandwidth() + 1;
    for (std::size_t i = 0; i < extent; ++i) {
        const double lhs = op.weighted_psi_column(mu, i);
        const double rhs = s * mu.at(i);
        if (lhs > rhs + slack_for(rhs)) return false;
    }
    double tail_lhs = 0.0;
    for (const auto& [k, c] : spec.gamma_tail().offsets)
        tail_lhs += mu.tail * c / spec.lambda_tail();
    const double tail_rhs = s * mu.tail;
    return tail_lhs <= tail_rhs + slack_for(tail_rhs);
}

double Certificate::iss_gain(double r) const {
    const double coeff =
        std::pow(input_gain / (lambda_inf * coercivity_lo), 1.0 / p);
    return coeff * std::pow(r, q / p);
}

Certificate assemble_certificate(const GainSpec& gain, const MuResult& mu,
                                 double r_upper, double p, double q) {
    require(p >= 1.0 && std::isfinite(p), "exponent p must be finite and >= 1");
    require(q >= 1.0 && std::isfinite(q), "exponent q must be finite and >= 1");
    require(mu.lambda_inf > 0.0,
            "certificate assembly needs a positive decay margin");
    require(mu.mu.lo > 0.0, "mu must be positive");

    Certificate cert;
    cert.mu = mu.mu;
    cert.lambda_inf = mu.lambda_inf;
    cert.p = p;
    cert.q = q;
    cert.input_gain = mu.mu.hi * gain.bounds().gamma_u_hi;
    cert.coercivity_lo = mu.mu.lo * gain.bounds().alpha_lo;
    cert.coercivity_hi = mu.mu.hi * gain.bounds().alpha_hi;
    cert.r_hat = mu.r_hat;
    cert.r_upper = r_upper;
    cert.overshoot = std::pow(cert.coercivity_hi / cert.coercivity_lo, 1.0 / p);
    cert.decay_rate = cert.lambda_inf / p;
    return cert;
}

AnalyzeReport analyze(const GainOperator& op, double p, double q,
                      const AnalyzeOptions& opts) {
    AnalyzeReport rep;
    rep.upper_bound = kInf;
    rep.colsums = gamma_norm_11(op, opts.schedule, opts.colsum_cap);
    if (!rep.colsums.bounded) {
        rep.verdict = Verdict::inconclusive;
        rep.reason = "interconnection column sums exceed the configured cap";
        return rep;
    }
    rep.radius = spectral_radius(op, opts.schedule, opts.schedule_tol, opts.power);
    if (rep.radius.r_hat >= 1.0) {
        rep.verdict = Verdict::refuted;
        rep.reason =
            "certified lower bound on the gain-operator spectral radius is >= 1";
        return rep;
    }
    rep.mu = compute_mu(op, rep.radius.r_hat, opts.rho);
    if (rep.mu->status == MuStatus::verification_failed) {
        rep.verdict = Verdict::inconclusive;
        rep.reason = rep.mu->diagnostics;
        return rep;
    }
    rep.upper_cert = upper_bound_certificate(op, rep.mu->mu, rep.mu->s);
    if (rep.upper_cert) rep.upper_bound = rep.mu->s;
    rep.certificate = assemble_certificate(
        op.spec(), *rep.mu, rep.upper_bound, p, q);
    if (rep.mu->status == MuStatus::ok && rep.upper_cert && rep.mu->s < 1.0) {
        rep.verdict = Verdict::certified;
        rep.reason = rep.mu->diagnostics;
    } else {
        rep.verdict = Verdict::inconclusive;
        rep.reason = rep.upper_cert
                         ? rep.mu->diagnostics
                         : rep.mu->diagnostics +
                               "; no upper certificate at the series level";
    }
    return rep;
}

}  // namespace smallgain
