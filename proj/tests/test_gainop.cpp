#include "smallgain/gainop.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"

using namespace smallgain;

namespace {

GainSpec::Bounds uniform_bounds(double lam, double gu = 1.0, double alpha = 1.0) {
    return GainSpec::Bounds{lam, lam, gu, alpha, alpha};
}

// Uniform decay lam, nearest-neighbour coupling c in both directions.
GainSpec tridiag_spec(double c, double lam) {
    return GainSpec({}, lam, {}, ToeplitzTail{{{-1, c}, {1, c}}}, {}, 1.0,
                    uniform_bounds(lam));
}

GainSpec zero_gamma_spec(double lam) {
    return GainSpec({}, lam, {}, ToeplitzTail{}, {}, 1.0, uniform_bounds(lam));
}

// Each subsystem is driven only by its successor.
GainSpec unidirectional_spec(double c, double lam) {
    return GainSpec({}, lam, {}, ToeplitzTail{{{1, c}}}, {}, 1.0,
                    uniform_bounds(lam));
}

GainSpec random_spec(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> lam_d(0.5, 2.0);
    std::uniform_real_distribution<double> val_d(0.0, 0.4);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<double> lam(16);
    for (auto& v : lam) v = lam_d(rng);
    std::vector<GainSpec::Row> rows(16);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < 16; ++j)
            if (j != i && coin(rng) < 0.25) rows[i].emplace_back(j, val_d(rng));
    return GainSpec(std::move(lam), 1.0, std::move(rows),
                    ToeplitzTail{{{-1, 0.1}, {1, 0.1}}}, {}, 1.0,
                    GainSpec::Bounds{0.5, 2.0, 1.0, 1.0, 1.0});
}

Eigen::MatrixXd to_dense(const GainOperator& op, std::size_t n) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = op.psi(i, j);
    return m;
}

// Re-derives the worst decay margin from scalar entry queries only, bypassing
// the column indexes the library builds internally.
double recheck_worst_margin(const GainSpec& spec, const MuVec& mu,
                            std::size_t window) {
    const std::size_t reach = window + 2 * spec.tail_bandwidth() +
                              spec.gamma_rows().size() + 4;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < window; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < reach; ++j)
            dot += mu.at(j) * spec.gamma(j, i);
        worst = std::min(worst, spec.lambda(i) - dot / mu.at(i));
    }
    return worst;
}

}  // namespace

TEST_CASE("gain spec rejects malformed data") {
    CHECK_THROWS_AS(GainSpec({}, 1.0, {{{1, -0.5}}}, ToeplitzTail{}, {}, 1.0,
                             uniform_bounds(1.0)),
                    SpecError);
    CHECK_THROWS_AS(GainSpec({}, 1.0, {{{0, 0.5}}}, ToeplitzTail{}, {}, 1.0,
                             uniform_bounds(1.0)),
                    SpecError);  // diagonal entry in row 0
    CHECK_THROWS_AS(GainSpec({}, 1.0, {}, ToeplitzTail{{{0, 0.5}}}, {}, 1.0,
                             uniform_bounds(1.0)),
                    SpecError);  // diagonal offset
    CHECK_THROWS_AS(GainSpec({}, 1.0, {}, ToeplitzTail{{{1, 0.2}, {1, 0.3}}},
                             {}, 1.0, uniform_bounds(1.0)),
                    SpecError);  // duplicate offset
    CHECK_THROWS_AS(GainSpec({0.1}, 1.0, {}, ToeplitzTail{}, {}, 1.0,
                             uniform_bounds(1.0)),
                    SpecError);  // decay rate below the declared lower bound
    CHECK_THROWS_AS(GainSpec({}, 1.0, {}, ToeplitzTail{}, {}, 0.0,
                             uniform_bounds(1.0)),
                    SpecError);  // input gain must be positive
    CHECK_THROWS_AS(GainSpec({}, 0.0, {}, ToeplitzTail{}, {}, 1.0,
                             GainSpec::Bounds{0.0, 1.0, 1.0, 1.0, 1.0}),
                    SpecError);  // lambda_lo must be positive
}

TEST_CASE("gain entries follow the prefix rows and the tail rule") {
    GainSpec spec({}, 1.0, {{{2, 5.0}}, {{0, 3.0}, {3, 4.0}}},
                  ToeplitzTail{{{-1, 0.25}, {2, 0.5}}}, {}, 1.0,
                  uniform_bounds(1.0));
    CHECK(spec.gamma(0, 2) == 5.0);
    CHECK(spec.gamma(0, 1) == 0.0);
    CHECK(spec.gamma(1, 0) == 3.0);
    CHECK(spec.gamma(1, 3) == 4.0);
    CHECK(spec.gamma(5, 4) == 0.25);
    CHECK(spec.gamma(5, 7) == 0.5);
    CHECK(spec.gamma(5, 6) == 0.0);
    CHECK(spec.gamma(7, 7) == 0.0);
}

TEST_CASE("column sums vanish for a decoupled network") {
    GainOperator op(zero_gamma_spec(1.0));
    std::vector<std::size_t> sched{1, 4, 16};
    auto rep = gamma_norm_11(op, sched);
    for (double e : rep.estimates) CHECK(e == 0.0);
    CHECK(rep.limit == 0.0);
    CHECK(rep.bounded);
}

TEST_CASE("column sums of nearest-neighbour coupling reach 2c") {
    const double c = 0.3;
    GainOperator op(tridiag_spec(c, 1.0));
    std::vector<std::size_t> sched{1, 3, 5, 10};
    auto rep = gamma_norm_11(op, sched);
    // Column 0 has a single neighbour; every later column has two.
    CHECK(rep.estimates[0] == doctest::Approx(c).epsilon(1e-14));
    for (std::size_t k = 1; k < rep.estimates.size(); ++k)
        CHECK(rep.estimates[k] == doctest::Approx(2 * c).epsilon(1e-14));
    CHECK(rep.limit == doctest::Approx(2 * c).epsilon(1e-14));
}

TEST_CASE("geometric band column sums match the series sum") {
    const double c = 0.35;
    ToeplitzTail tail;
    for (int k = 1; k <= 40; ++k) {
        const double coeff = c * std::pow(0.5, k);
        tail.offsets.push_back({k, coeff});
        tail.offsets.push_back({-k, coeff});
    }
    GainOperator op(GainSpec({}, 1.0, {}, tail, {}, 1.0, uniform_bounds(1.0)));
    double series = 0.0;
    for (int k = 1; k <= 40; ++k) series += 2.0 * c * std::pow(0.5, k);
    CHECK(op.gamma_colsum_limit() == doctest::Approx(series).epsilon(1e-13));
    // The band is wide enough that the sup sits below 2c by under 1e-9.
    CHECK(op.gamma_colsum_limit() < 2 * c);
    CHECK(std::abs(op.gamma_colsum_limit() - 2 * c) < 1e-9);
}

TEST_CASE("column sum estimates grow monotonically with the window") {
    std::mt19937_64 rng(2024);
    GainOperator op(random_spec(rng));
    std::vector<std::size_t> sched{1, 2, 4, 8, 16, 32, 64};
    auto rep = gamma_norm_11(op, sched);
    for (std::size_t k = 1; k < rep.estimates.size(); ++k)
        CHECK(rep.estimates[k] >= rep.estimates[k - 1]);
    CHECK(rep.limit >= rep.estimates.back());
    CHECK(rep.bounded);
}

TEST_CASE("column sum cap flags an out-of-budget operator") {
    GainOperator op(tridiag_spec(0.3, 1.0));
    std::vector<std::size_t> sched{4};
    auto rep = gamma_norm_11(op, sched, 0.5);
    CHECK_FALSE(rep.bounded);
}

TEST_CASE("one-directional coupling has nilpotent truncations") {
    GainOperator op(unidirectional_spec(0.5, 1.0));
    std::vector<std::size_t> sched{4, 8, 16};
    auto res = spectral_radius(op, sched);
    for (const auto& b : res.per_n) {
        CHECK(b.lower == 0.0);
        CHECK(b.upper_local >= 0.0);
    }
    CHECK(res.r_hat == 0.0);
    CHECK(res.successive_converged);
}

TEST_CASE("an isolated off-diagonal entry gives zero truncated radius") {
    GainSpec spec({}, 1.0, {{}, {{2, 5.0}}, {}}, ToeplitzTail{}, {}, 1.0,
                  uniform_bounds(1.0));
    GainOperator op(spec);
    std::vector<std::size_t> sched{3, 6};
    auto res = spectral_radius(op, sched);
    for (const auto& b : res.per_n) CHECK(b.lower == 0.0);
    CHECK(res.r_hat == 0.0);
}

TEST_CASE("truncation bounds match the closed-form tridiagonal eigenvalue") {
    const double c = 0.25;
    GainOperator op(tridiag_spec(c, 1.0));
    std::vector<std::size_t> sched{4, 8, 16, 32, 64};
    auto res = spectral_radius(op, sched);
    for (const auto& b : res.per_n) {
        const double exact =
            2.0 * c * std::cos(M_PI / static_cast<double>(b.n + 1));
        CHECK(b.converged);
        CHECK(b.lower <= exact + 1e-14);
        CHECK(b.upper_local >= exact - 1e-14);
        CHECK(std::abs(b.lower - exact) < 1e-9);
    }
    CHECK(res.successive_converged == false);  // gap at 64 is ~5e-4 > 1e-6
    CHECK(res.r_hat ==
          doctest::Approx(2.0 * c * std::cos(M_PI / 65.0)).epsilon(1e-9));
}

TEST_CASE("truncation bounds bracket a dense eigensolve of a random operator") {
    std::mt19937_64 rng(777);
    GainOperator op(random_spec(rng));
    const std::size_t n = 24;
    const double exact = oracle::dense_spectral_radius(to_dense(op, n));
    std::vector<std::size_t> sched{n};
    auto res = spectral_radius(op, sched);
    const auto& b = res.per_n[0];
    CHECK(b.lower <= exact + 1e-9);
    CHECK(b.upper_local >= exact - 1e-9);
    if (b.converged) CHECK(std::abs(b.lower - exact) < 1e-7);
}

TEST_CASE("truncated radius lower bounds are monotone in the window") {
    std::mt19937_64 rng(991);
    GainOperator op(random_spec(rng));
    std::vector<std::size_t> sched{6, 12, 24, 48};
    auto res = spectral_radius(op, sched);
    for (std::size_t k = 1; k < res.per_n.size(); ++k) {
        // The true radii are nondecreasing, so the later upper bound must
        // clear the earlier lower bound exactly; the lower bounds themselves
        // only track each other to the bracket tolerance.
        CHECK(res.per_n[k].upper_local >= res.per_n[k - 1].lower - 1e-12);
        CHECK(res.per_n[k].lower >= res.per_n[k - 1].lower - 1e-9);
        CHECK(res.per_n[k].converged);
    }
}

TEST_CASE("joint scaling of decay and coupling leaves the radius fixed") {
    const double scale = 3.7;
    GainOperator base(tridiag_spec(0.1, 1.0));
    GainOperator scaled(GainSpec({}, scale, {},
                                 ToeplitzTail{{{-1, 0.1 * scale}, {1, 0.1 * scale}}},
                                 {}, 1.0, uniform_bounds(scale)));
    std::vector<std::size_t> sched{8, 16, 32};
    auto a = spectral_radius(base, sched);
    auto b = spectral_radius(scaled, sched);
    for (std::size_t k = 0; k < sched.size(); ++k)
        CHECK(a.per_n[k].lower ==
              doctest::Approx(b.per_n[k].lower).epsilon(1e-10));
}

TEST_CASE("decoupled network yields unit weights and the full decay rate") {
    const double lam = 1.7;
    GainOperator op(zero_gamma_spec(lam));
    auto mu = compute_mu(op, 0.0);
    CHECK(mu.status == MuStatus::ok);
    CHECK(mu.tail_bound_met);
    CHECK(mu.mu.lo == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mu.mu.hi == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mu.lambda_inf == doctest::Approx(lam).epsilon(1e-14));
    CHECK(mu.meets_lemma_bound);
}

TEST_CASE("nearest-neighbour chain weights certify the expected margin") {
    const double c = 0.1;
    GainOperator op(tridiag_spec(c, 1.0));
    std::vector<std::size_t> sched{8, 16, 32, 64};
    auto rad = spectral_radius(op, sched);
    auto mu = compute_mu(op, rad.r_hat);
    CHECK(mu.status == MuStatus::ok);
    CHECK(mu.tail_bound_met);
    // The binding margin sits on the constant tail: lam - 2c exactly.
    CHECK(mu.lambda_inf == doctest::Approx(1.0 - 2 * c).epsilon(1e-12));
    CHECK(mu.lambda_inf >= (1.0 - rad.r_hat) - mu.rho - 1e-12);
    CHECK(upper_bound_certificate(op, mu.mu, mu.s));
    // Weights stay within the geometric-series budget.
    CHECK(mu.mu.lo >= 1.0);
    CHECK(mu.mu.hi <= 1.0 / (1.0 - 2 * c / mu.s) + 1e-9);

    const double rechecked =
        recheck_worst_margin(op.spec(), mu.mu, mu.mu.prefix.size());
    CHECK(rechecked >= mu.lambda_inf - 1e-12);
    CHECK(rechecked == doctest::Approx(mu.lambda_inf).epsilon(1e-10));
}

TEST_CASE("one-directional chain verifies a unit margin despite loose bounds") {
    // Truncations are nilpotent, so the certified radius estimate stays 0 while
    // the actual margin achievable by any weights is lam - c. The construction
    // must still verify its certificate and report the shortfall.
    GainOperator op(unidirectional_spec(1.0, 2.0));
    auto mu = compute_mu(op, 0.0);
    CHECK(mu.status == MuStatus::bound_violation);
    CHECK_FALSE(mu.tail_bound_met);
    CHECK(mu.lambda_inf == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mu.lemma_bound == doctest::Approx(2.0 - 0.002).epsilon(1e-12));
    CHECK(upper_bound_certificate(op, mu.mu, mu.s));
    const double rechecked =
        recheck_worst_margin(op.spec(), mu.mu, mu.mu.prefix.size());
    CHECK(rechecked >= mu.lambda_inf - 1e-12);
}

TEST_CASE("weighted margins scale linearly with the operator") {
    const double scale = 3.7;
    GainOperator base(tridiag_spec(0.1, 1.0));
    GainOperator scaled(GainSpec({}, scale, {},
                                 ToeplitzTail{{{-1, 0.1 * scale}, {1, 0.1 * scale}}},
                                 {}, 1.0, uniform_bounds(scale)));
    std::vector<std::size_t> sched{8, 16, 32};
    auto ra = spectral_radius(base, sched);
    auto rb = spectral_radius(scaled, sched);
    auto ma = compute_mu(base, ra.r_hat);
    auto mb = compute_mu(scaled, rb.r_hat);
    CHECK(mb.lambda_inf == doctest::Approx(scale * ma.lambda_inf).epsilon(1e-10));
    CHECK(ma.status == MuStatus::ok);
    CHECK(mb.status == MuStatus::ok);
    // With the series stopping target matched, the weights themselves agree
    // because the operator is scale-invariant.
    auto ma2 = compute_mu(base, ra.r_hat, 2e-3);
    auto mb2 = compute_mu(scaled, rb.r_hat, 2e-3);
    CHECK(mb2.mu.hi == doctest::Approx(ma2.mu.hi).epsilon(1e-10));
}

TEST_CASE("upper certificate accepts the exact level and rejects below it") {
    GainOperator op(tridiag_spec(0.2, 1.0));
    CHECK(upper_bound_certificate(op, MuVec::ones(), 0.4));
    CHECK_FALSE(upper_bound_certificate(op, MuVec::ones(), 0.39));
    GainOperator zero(zero_gamma_spec(1.0));
    CHECK(upper_bound_certificate(zero, MuVec::ones(), 0.01));
}

TEST_CASE("certified truncation bounds never exceed a held upper certificate") {
    GainOperator op(tridiag_spec(0.1, 1.0));
    std::vector<std::size_t> sched{4, 8, 16, 32, 64};
    auto rad = spectral_radius(op, sched);
    auto mu = compute_mu(op, rad.r_hat);
    REQUIRE(upper_bound_certificate(op, mu.mu, mu.s));
    for (const auto& b : rad.per_n) CHECK(b.lower <= mu.s + 1e-12);
}

TEST_CASE("certificate assembly reproduces hand-computed envelopes") {
    GainOperator op(zero_gamma_spec(1.0));
    auto mu = compute_mu(op, 0.0);
    auto cert = assemble_certificate(op.spec(), mu, mu.s, 2.0, 2.0);
    CHECK(cert.overshoot == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cert.decay_rate == doctest::Approx(0.5).epsilon(1e-14));
    // Unit data collapses the trajectory gain to the identity.
    CHECK(cert.iss_gain(0.3) == doctest::Approx(0.3).epsilon(1e-12));

    MuResult synth;
    synth.mu = MuVec{{}, 1.0, 1.0, 2.0};
    synth.lambda_inf = 0.8;
    GainSpec wide({}, 1.0, {}, ToeplitzTail{}, {}, 1.0,
                  GainSpec::Bounds{1.0, 1.0, 1.0, 1.0, 4.0});
    auto c2 = assemble_certificate(wide, synth, 1.0, 2.0, 2.0);
    CHECK(c2.overshoot == doctest::Approx(std::sqrt(8.0)).epsilon(1e-13));
    auto c3 = assemble_certificate(wide, synth, 1.0, 1.0, 1.0);
    CHECK(c3.decay_rate == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("analysis pipeline certifies a contractive chain") {
    GainOperator op(tridiag_spec(0.1, 1.0));
    AnalyzeOptions opts;
    opts.schedule = {8, 16, 32, 64};
    auto rep = analyze(op, 2.0, 2.0, opts);
    CHECK(rep.verdict == Verdict::certified);
    REQUIRE(rep.certificate.has_value());
    CHECK(rep.upper_cert);
    CHECK(rep.upper_bound < 1.0);
    CHECK(rep.certificate->decay_rate ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(rep.colsums.limit == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("analysis pipeline refutes an expansive chain") {
    GainOperator op(tridiag_spec(0.6, 1.0));
    AnalyzeOptions opts;
    opts.schedule = {8, 16};
    auto rep = analyze(op, 2.0, 2.0, opts);
    CHECK(rep.verdict == Verdict::refuted);
    CHECK(rep.radius.r_hat >= 1.0);
    CHECK_FALSE(rep.certificate.has_value());
}

TEST_CASE("analysis pipeline reports inconclusive when bounds stay loose") {
    GainOperator op(unidirectional_spec(1.0, 2.0));
    AnalyzeOptions opts;
    opts.schedule = {8, 16};
    auto rep = analyze(op, 2.0, 2.0, opts);
    CHECK(rep.verdict == Verdict::inconclusive);
    REQUIRE(rep.mu.has_value());
    CHECK(rep.mu->status == MuStatus::bound_violation);
    // A valid decay certificate still ships with the diagnosis.
    REQUIRE(rep.certificate.has_value());
    CHECK(rep.certificate->lambda_inf == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.upper_cert);
}
