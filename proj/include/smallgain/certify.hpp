#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "smallgain/errors.hpp"
#include "smallgain/gainop.hpp"
#include "smallgain/netsim.hpp"
#include "smallgain/seqspace.hpp"

namespace smallgain {

// One inequality sampled along a trajectory grid. margin = bound - observed,
// so a sample satisfies the inequality when margin >= -tol.
struct MarginSeries {
    std::string check;
    std::vector<double> times;
    std::vector<double> margins;
    double tol = 0.0;
    bool pass = true;
    double worst = std::numeric_limits<double>::infinity();
    double worst_time = 0.0;
    // Samples where the one-step and two-step derivative estimates disagree
    // beyond ten times the locally predicted gap.
    std::vector<std::size_t> flagged;

    void add(double t, double margin) {
        times.push_back(t);
        margins.push_back(margin);
        if (margin < worst) {
            worst = margin;
            worst_time = t;
        }
        pass = worst >= -tol;
    }
};

// Weighted sum over the truncation, sum_{i<N} mu_i V_i(x_i). The absent tail
// contributes zero because every tail set contains the origin.
double composite_V(const Certificate& cert, const NetworkSpec& net,
                   const BlockLayout& layout, std::span<const double> flat);
double composite_V(const Certificate& cert, const NetworkSpec& net,
                   const TruncSeq& x);

// Forward-difference check of the declared per-subsystem dissipation
//   D+(V_i o phi_i) <= -lambda_i V_i + sum_j gamma_ij V_j + gamma_iu |u_i|^q.
// The derivative estimate uses one grid step; a two-step estimate provides
// the consistency flags. tol < 0 selects 10 * dt * max |V''| with V''
// estimated from second differences of the V series.
MarginSeries check_local_dissipation(const NetworkSpec& net,
                                     const Trajectory& traj,
                                     const InputSignal& u, std::size_t i,
                                     double tol = -1.0);

// Same check for the composite function against the certificate rate,
//   D+(V o phi) <= -lambda_inf V + mu_hi gamma_u_hi |u|_{q,inf}^q.
MarginSeries check_composite_dissipation(const Certificate& cert,
                                         const NetworkSpec& net,
                                         const Trajectory& traj,
                                         const InputSignal& u,
                                         double tol = -1.0);

// Log-linear least squares v ~ exp(c - a t) over the window [first,
// first+count). M is exp(c at the window start) / v(window start), the
// dimensionless overshoot. residual is the rms log misfit.
struct DecayFit {
    double M = 0.0;
    double a = 0.0;
    double residual = 0.0;
    double v0 = 0.0;
    std::size_t samples = 0;
};

DecayFit fit_decay(std::span<const double> times,
                   std::span<const double> values, std::size_t first,
                   std::size_t count);

struct EnvelopeReport {
    MarginSeries margins;
    double M = 0.0;
    double a = 0.0;
    double gain_value = 0.0;  // gamma(|u|_{q,inf}) constant in the bound
    double offset = 0.0;      // sup-norm of the target set, 0 for the plain check
    double initial = 0.0;     // distance (or norm) at the first sample
    DecayFit fit;
    bool fit_valid = false;
    bool pass = false;
};

// Trajectory envelope |phi(t)|_A <= M e^{-a (t - t0)} |phi(t0)|_A +
// gamma_fn(u_sup) + tol at every sample, plus a decay fit of the distance
// series. gamma_fn is evaluated once at u_sup.
EnvelopeReport check_eiss_envelope(const Trajectory& traj, const SetSpec& A,
                                   double M, double a,
                                   const std::function<double(double)>& gamma_fn,
                                   double u_sup, double tol);

// Practical variant on the plain norm, with the bounded-set offset:
//   |phi(t)|_p <= M e^{-a(t-t0)} |phi(t0)|_p + gamma_fn(u_sup)
//                 + (1 + M e^{-a(t-t0)}) sup_norm(A) + tol.
// Requires a bounded set; sup_norm(A) = +inf is rejected.
EnvelopeReport practical_iss_offset(const Trajectory& traj, const SetSpec& A,
                                    double M, double a,
                                    const std::function<double(double)>& gamma_fn,
                                    double u_sup, double tol);

// Two-sided sandwich coer_lo * dist^p <= V <= coer_hi * dist^p at every
// sample; margin is the smaller slack of the two sides.
MarginSeries check_coercivity(const Certificate& cert, const NetworkSpec& net,
                              const Trajectory& traj);

// For vanishing input, V(phi(t)) e^{lambda_inf (t - t0)} must be
// nonincreasing along the grid; margins are relative one-step decrements.
MarginSeries check_monotone_comparison(const Certificate& cert,
                                       const NetworkSpec& net,
                                       const Trajectory& traj,
                                       double rel_tol = 1e-8);

}  // namespace smallgain
