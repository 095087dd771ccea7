#include "smallgain/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smallgain {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Applies fn(j, gamma_ij) for every structural entry of row i that lands
// inside the truncation.
template <typename Fn>
void for_each_gain_entry(const GainSpec& g, std::size_t i,
                         std::size_t n_blocks, Fn&& fn) {
    if (i < g.gamma_rows().size()) {
        for (const auto& [j, v] : g.gamma_rows()[i])
            if (j < n_blocks) fn(j, v);
        return;
    }
    for (const auto& [k, v] : g.gamma_tail().offsets) {
        const long long j = static_cast<long long>(i) + k;
        if (j >= 0 && j < static_cast<long long>(n_blocks))
            fn(static_cast<std::size_t>(j), v);
    }
}

double auto_tol(const std::vector<double>& v, double dt) {
    double max_dd = 0.0;
    for (std::size_t k = 0; k + 2 < v.size(); ++k)
        max_dd = std::max(max_dd, std::abs(v[k + 2] - 2 * v[k + 1] + v[k]));
    // 10 * dt * max |V''|, with the second derivative read off the grid.
    return 10.0 * std::max(max_dd / dt, 1e-12 * dt);
}

// Marks samples whose one-step and two-step derivative estimates split
// beyond ten times the gap predicted from the previous stencil.
std::vector<std::size_t> consistency_flags(const std::vector<double>& v,
                                           double dt) {
    std::vector<std::size_t> flagged;
    for (std::size_t k = 1; k + 2 < v.size(); ++k) {
        const double gap = std::abs(v[k + 2] - 2 * v[k + 1] + v[k]) / (2 * dt);
        const double pred = std::abs(v[k + 1] - 2 * v[k] + v[k - 1]) / (2 * dt);
        const double floor = 64 * kEps * (1 + std::abs(v[k])) / dt;
        if (gap > 10 * pred + floor) flagged.push_back(k);
    }
    return flagged;
}

MarginSeries dissipation_series(std::string name, const Trajectory& traj,
                                const std::vector<double>& v,
                                const std::function<double(std::size_t)>& bound,
                                double tol) {
    MarginSeries out;
    out.check = std::move(name);
    out.tol = tol < 0 ? auto_tol(v, traj.dt) : tol;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        const double deriv = (v[k + 1] - v[k]) / traj.dt;
        out.add(traj.times[k], bound(k) - deriv);
    }
    out.flagged = consistency_flags(v, traj.dt);
    return out;
}

double block_input_norm(const InputSignal& u, std::size_t i, double t) {
    const Eigen::VectorXd ui = u.block(i, t);
    return ui.size() == 0 ? 0.0 : ui.norm();
}

DecayFit log_linear_fit(std::span<const double> times,
                        std::span<const double> values, std::size_t first,
                        std::size_t count) {
    DecayFit fit;
    fit.samples = count;
    fit.v0 = values[first];
    const double t0 = times[first];
    double st = 0.0, sy = 0.0;
    for (std::size_t k = first; k < first + count; ++k) {
        st += times[k] - t0;
        sy += std::log(values[k]);
    }
    const double tbar = st / static_cast<double>(count);
    const double ybar = sy / static_cast<double>(count);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = first; k < first + count; ++k) {
        const double dx = (times[k] - t0) - tbar;
        sxx += dx * dx;
        sxy += dx * (std::log(values[k]) - ybar);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    const double intercept = ybar - slope * tbar;  // log value at t0
    fit.a = -slope;
    fit.M = std::exp(intercept) / fit.v0;
    double ss = 0.0;
    for (std::size_t k = first; k < first + count; ++k) {
        const double r =
            std::log(values[k]) - (intercept + slope * (times[k] - t0));
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / static_cast<double>(count));
    return fit;
}

EnvelopeReport envelope_over_series(const Trajectory& traj,
                                    const std::vector<double>& series,
                                    double M, double a, double gain_value,
                                    double offset, double tol,
                                    const char* name) {
    EnvelopeReport rep;
    rep.M = M;
    rep.a = a;
    rep.gain_value = gain_value;
    rep.offset = offset;
    rep.initial = series.front();
    rep.margins.check = name;
    rep.margins.tol = tol;
    const double t0 = traj.times.front();
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double decay = M * std::exp(-a * (traj.times[k] - t0));
        const double bound =
            decay * rep.initial + gain_value + (1.0 + decay) * offset;
        rep.margins.add(traj.times[k], bound - series[k]);
    }
    std::size_t n_pos = 0;
    while (n_pos < series.size() && series[n_pos] > 0.0) ++n_pos;
    if (n_pos >= 2) {
        rep.fit = log_linear_fit(traj.times, series, 0, n_pos);
        rep.fit_valid = true;
    }
    rep.pass = rep.margins.pass;
    return rep;
}

}  // namespace

double composite_V(const Certificate& cert, const NetworkSpec& net,
                   const BlockLayout& layout, std::span<const double> flat) {
    double acc = 0.0;
    for (std::size_t i = 0; i < layout.blocks(); ++i)
        acc += cert.mu.at(i) * local_V(net, i, layout.block(flat, i));
    return acc;
}

double composite_V(const Certificate& cert, const NetworkSpec& net,
                   const TruncSeq& x) {
    return composite_V(cert, net, x.layout(), x.flat());
}

MarginSeries check_local_dissipation(const NetworkSpec& net,
                                     const Trajectory& traj,
                                     const InputSignal& u, std::size_t i,
                                     double tol) {
    const BlockLayout& layout = *traj.layout;
    require(i < layout.blocks(), "subsystem index beyond the truncation");
    require(traj.samples() >= 2, "dissipation check needs at least two samples");

    std::vector<double> vi(traj.samples());
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        vi[k] = local_V(net, i, layout.block(traj.state(k), i));
        require(std::isfinite(vi[k]), "nonfinite V along the trajectory");
    }
    const GainSpec& g = net.gain;
    auto bound = [&](std::size_t k) {
        double b = -g.lambda(i) * vi[k];
        for_each_gain_entry(g, i, layout.blocks(), [&](std::size_t j, double c) {
            b += c * local_V(net, j, layout.block(traj.state(k), j));
        });
        const double un = block_input_norm(u, i, traj.times[k]);
        if (un > 0.0) b += g.gamma_u(i) * std::pow(un, net.q);
        return b;
    };
    return dissipation_series("local_dissipation_" + std::to_string(i), traj,
                              vi, bound, tol);
}

MarginSeries check_composite_dissipation(const Certificate& cert,
                                         const NetworkSpec& net,
                                         const Trajectory& traj,
                                         const InputSignal& u, double tol) {
    require(traj.samples() >= 2, "dissipation check needs at least two samples");
    const BlockLayout& layout = *traj.layout;
    std::vector<double> v(traj.samples());
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        v[k] = composite_V(cert, net, layout, traj.state(k));
        require(std::isfinite(v[k]), "nonfinite V along the trajectory");
    }
    const double input_term =
        u.is_zero() ? 0.0
                    : cert.input_gain * std::pow(u.sup_norm_q(), net.q);
    auto bound = [&](std::size_t k) {
        return -cert.lambda_inf * v[k] + input_term;
    };
    return dissipation_series("composite_dissipation", traj, v, bound, tol);
}

DecayFit fit_decay(std::span<const double> times,
                   std::span<const double> values, std::size_t first,
                   std::size_t count) {
    require(times.size() == values.size(), "decay fit needs matched series");
    require(count >= 2 && first + count <= values.size(),
            "decay fit window out of range");
    for (std::size_t k = first; k < first + count; ++k)
        if (!(values[k] > 0.0))
            throw NumericError("decay fit window requires positive samples");
    return log_linear_fit(times, values, first, count);
}

EnvelopeReport check_eiss_envelope(const Trajectory& traj, const SetSpec& A,
                                   double M, double a,
                                   const std::function<double(double)>& gamma_fn,
                                   double u_sup, double tol) {
    require(traj.samples() >= 1, "envelope check needs samples");
    std::vector<double> dist(traj.samples());
    for (std::size_t k = 0; k < traj.samples(); ++k)
        dist[k] = set_dist(*traj.layout, traj.state(k), A, traj.p);
    const double gain_value = gamma_fn ? gamma_fn(u_sup) : 0.0;
    return envelope_over_series(traj, dist, M, a, gain_value, 0.0, tol,
                                "eiss_envelope");
}

EnvelopeReport practical_iss_offset(const Trajectory& traj, const SetSpec& A,
                                    double M, double a,
                                    const std::function<double(double)>& gamma_fn,
                                    double u_sup, double tol) {
    require(traj.samples() >= 1, "envelope check needs samples");
    const double set_norm = A.sup_norm(traj.p);
    require(std::isfinite(set_norm),
            "practical offset needs a bounded target set");
    std::vector<double> norm(traj.samples());
    for (std::size_t k = 0; k < traj.samples(); ++k)
        norm[k] = lp_norm(*traj.layout, traj.state(k), traj.p);
    const double gain_value = gamma_fn ? gamma_fn(u_sup) : 0.0;
    return envelope_over_series(traj, norm, M, a, gain_value, set_norm, tol,
                                "practical_iss");
}

MarginSeries check_coercivity(const Certificate& cert, const NetworkSpec& net,
                              const Trajectory& traj) {
    const BlockLayout& layout = *traj.layout;
    std::vector<double> v(traj.samples()), dp(traj.samples());
    double scale = 1.0;
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        v[k] = composite_V(cert, net, layout, traj.state(k));
        const double d = set_dist(layout, traj.state(k), net.sets, net.p);
        dp[k] = std::pow(d, net.p);
        scale = std::max(scale, cert.coercivity_hi * dp[k]);
    }
    MarginSeries out;
    out.check = "coercivity";
    out.tol = 1e-9 * scale;
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        const double lower_slack = v[k] - cert.coercivity_lo * dp[k];
        const double upper_slack = cert.coercivity_hi * dp[k] - v[k];
        out.add(traj.times[k], std::min(lower_slack, upper_slack));
    }
    return out;
}

MarginSeries check_monotone_comparison(const Certificate& cert,
                                       const NetworkSpec& net,
                                       const Trajectory& traj,
                                       double rel_tol) {
    require(traj.samples() >= 2, "comparison check needs at least two samples");
    const BlockLayout& layout = *traj.layout;
    const double t0 = traj.times.front();
    std::vector<double> w(traj.samples());
    for (std::size_t k = 0; k < traj.samples(); ++k)
        w[k] = composite_V(cert, net, layout, traj.state(k)) *
               std::exp(cert.lambda_inf * (traj.times[k] - t0));
    MarginSeries out;
    out.check = "monotone_comparison";
    out.tol = rel_tol;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
        const double ref = std::max(std::abs(w[k]), 1e-300);
        out.add(traj.times[k], (w[k] - w[k + 1]) / ref);
    }
    return out;
}

}  // namespace smallgain
