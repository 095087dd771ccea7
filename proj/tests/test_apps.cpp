#include "smallgain/apps.hpp"

#include <cmath>
#include <vector>

#include <doctest.h>

using namespace smallgain;

namespace {

Eigen::MatrixXd mat1(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return m;
}

// Scalar block dz = -(2 + sin t) z with V = z^2. The rate 2 + sin t is at
// least 1, and V' = -2 (2 + sin t) V <= -2 V, so lambda = 2 is a valid
// constant declaration.
NetworkSpec sine_rate_base() {
    SubsystemSpec sub;
    sub.n = 1;
    SumTerm term;
    term.sources.push_back({SourceRef::Kind::self, 0, mat1(1.0)});
    term.post = mat1(-1.0);
    term.coeff = TimeCoeff{2.0, 1.0, 1.0, 0.0};
    sub.terms.push_back(term);
    sub.lipschitz = 3.1;
    sub.V.kind = LocalLyapunov::Kind::quadratic_form;
    sub.V.P = mat1(1.0);
    GainSpec gain({}, 2.0, {}, {}, {}, 1.0, GainSpec::Bounds{2.0, 2.0, 1.0, 1.0, 1.0});
    return NetworkSpec({}, sub, gain, SetSpec::origin(BlockDims::uniform(1)),
                       2.0, 2.0, true);
}

// Chain dx_i = a x_i + c (x_{i-1} + x_{i+1}) with V_i = x_i^2 and the
// Young-split declaration lambda = -2a - 2c, gamma_(i,i+-1) = c.
NetworkSpec chain_net(double a, double c, bool time_varying) {
    SubsystemSpec sub;
    sub.n = 1;
    SumTerm term;
    term.post = mat1(1.0);
    term.sources.push_back({SourceRef::Kind::self, 0, mat1(a)});
    if (c != 0.0) {
        term.sources.push_back({SourceRef::Kind::rel_block, -1, mat1(c)});
        term.sources.push_back({SourceRef::Kind::rel_block, +1, mat1(c)});
    }
    sub.terms.push_back(term);
    sub.lipschitz = std::abs(a) + 2 * std::abs(c) + 0.1;
    sub.V.kind = LocalLyapunov::Kind::quadratic_form;
    sub.V.P = mat1(1.0);
    const double lambda = -2 * a - 2 * c;
    ToeplitzTail tail;
    if (c != 0.0) tail.offsets = {{-1, c}, {1, c}};
    GainSpec gain({}, lambda, {}, tail, {}, 1.0,
                  GainSpec::Bounds{lambda, lambda, 1.0, 1.0, 1.0});
    return NetworkSpec({}, sub, gain, SetSpec::origin(BlockDims::uniform(1)),
                       2.0, 2.0, time_varying);
}

Certificate certified_for(const GainSpec& gain, double p, double q) {
    GainOperator op(gain);
    AnalyzeReport rep = analyze(op, p, q);
    REQUIRE(rep.verdict == Verdict::certified);
    REQUIRE(rep.certificate.has_value());
    return *rep.certificate;
}

// Scalar agents with drift f(x) = -x, diffusive nearest-neighbor coupling of
// unit weight, gain 1/2, and averaging weights alpha_i = 2^-(i+1).
ConsensusSpec linear_consensus() {
    ConsensusSpec cs;
    cs.n = 1;
    SumTerm drift;
    drift.sources.push_back({SourceRef::Kind::self, 0, mat1(1.0)});
    drift.post = mat1(-1.0);
    cs.agent_terms.push_back(drift);
    cs.lipschitz = 1.0;
    cs.B = mat1(1.0);
    cs.sigma = 0.5;
    cs.alpha = WeightRule{{}, 0.5, 0.5, 0};
    cs.band = {{1, 1.0}};
    return cs;
}

// Scalar Luenberger chain: plant a = 0.5 with coupling c = 0.2, output gain
// k = 2.5, so the error chain has self rate a - k = -2 and the Young-split
// declaration lambda = 3.6, gamma_(i,i+-1) = 0.2.
ObserverSpec luenberger_chain(double k) {
    const double lambda = k > 0.0 ? 3.6 : 1.0;
    ToeplitzTail tail;
    tail.offsets = {{-1, 0.2}, {1, 0.2}};
    return ObserverSpec{1,
                        1,
                        mat1(0.5),
                        {{-1, mat1(0.2)}, {1, mat1(0.2)}},
                        mat1(1.0),
                        mat1(k),
                        GainSpec({}, lambda, {}, tail, {}, 1.0,
                                 GainSpec::Bounds{lambda, lambda, 1.0, 2.0, 2.0})};
}

}  // namespace

TEST_CASE("clock augmentation requires a time-varying base") {
    CHECK_THROWS_AS(clock_augment(chain_net(-1.0, 0.1, false), 1.0), SpecError);
    NetworkSpec tv = sine_rate_base();
    CHECK_THROWS_AS(clock_augment(tv, 0.0), SpecError);
    CHECK_THROWS_AS(clock_augment(tv, -2.0), SpecError);
    CHECK_NOTHROW(clock_augment(tv, 1.0));
}

TEST_CASE("clock block runs at unit rate and reproduces shifted solutions") {
    ClockAugmented aug = clock_augment(sine_rate_base(), 2.0);
    CHECK_FALSE(aug.augmented.time_varying);

    for (double t0 : {0.0, 1.5, std::acos(-1.0) / 2}) {
        TruncatedSystem sys = truncate(aug.augmented, 2);
        std::vector<double> z0{t0, 3.0};
        Trajectory traj = integrate(sys, z0, InputSignal::zero(), 3.0,
                                    IntegrateOptions{.dt = 1e-3});

        IntegrateOptions base_opts;
        base_opts.dt = 1e-3;
        base_opts.t0 = t0;
        TruncatedSystem base_sys = truncate(aug.base, 1);
        std::vector<double> x0{3.0};
        Trajectory base_traj =
            integrate(base_sys, x0, InputSignal::zero(), 3.0, base_opts);

        for (std::size_t k = 0; k < traj.samples(); ++k) {
            const double tau = traj.times[k];
            const double y = traj.state(k)[0];
            const double z = traj.state(k)[1];
            CHECK(std::abs(y - (t0 + tau)) <= 1e-12 * (1.0 + std::abs(y)));
            const double exact =
                3.0 * std::exp(-2.0 * tau + std::cos(t0 + tau) - std::cos(t0));
            CHECK(std::abs(z - exact) < 1e-8);
            CHECK(std::abs(z - base_traj.state(k)[0]) < 1e-10);
        }
    }
}

TEST_CASE("autonomous dynamics pass through the clock unchanged") {
    NetworkSpec base = chain_net(-1.0, 0.1, true);
    ClockAugmented aug = clock_augment(base, 1.0);

    std::vector<double> x0{1.0, -0.5, 0.25};
    Trajectory bt = integrate(truncate(base, 3), x0, InputSignal::zero(), 2.0,
                              IntegrateOptions{.dt = 1e-2});
    std::vector<double> z0{0.0, 1.0, -0.5, 0.25};
    Trajectory at = integrate(truncate(aug.augmented, 4), z0,
                              InputSignal::zero(), 2.0,
                              IntegrateOptions{.dt = 1e-2});

    REQUIRE(bt.samples() == at.samples());
    for (std::size_t k = 0; k < bt.samples(); ++k)
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(at.state(k)[i + 1] == bt.state(k)[i]);
}

TEST_CASE("augmented gain data shifts rows and pads the clock") {
    NetworkSpec base = chain_net(-1.0, 0.1, true);
    ClockAugmented aug = clock_augment(base, 1.0);
    const GainSpec& g = aug.augmented.gain;

    CHECK(g.lambda(0) == 1.0);
    CHECK(g.gamma_u(0) > 0.0);
    REQUIRE(!g.gamma_rows().empty());
    CHECK(g.gamma_rows()[0].empty());
    for (std::size_t i = 0; i < 12; ++i) CHECK(g.gamma(i, 0) == 0.0);
    for (std::size_t j = 0; j < 12; ++j) CHECK(g.gamma(0, j) == 0.0);
    CHECK(g.gamma(3, 2) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(g.gamma(3, 4) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(g.gamma(1, 2) == doctest::Approx(0.1).epsilon(1e-14));

    // A small clock rate caps the composite rate; a large one leaves the
    // chain value 1.6 in charge.
    Certificate c1 = certified_for(g, 2.0, 2.0);
    CHECK(c1.lambda_inf == doctest::Approx(1.0).epsilon(1e-9));
    Certificate c5 =
        certified_for(clock_augment(base, 5.0).augmented.gain, 2.0, 2.0);
    CHECK(c5.lambda_inf == doctest::Approx(1.6).epsilon(1e-9));

    // The clock row and column are zero, so the spectral estimates of the
    // shifted truncations match the originals exactly.
    AnalyzeOptions base_opts;
    base_opts.schedule = {8, 16, 32};
    AnalyzeOptions aug_opts;
    aug_opts.schedule = {9, 17, 33};
    AnalyzeReport br = analyze(GainOperator(base.gain), 2.0, 2.0, base_opts);
    AnalyzeReport ar = analyze(GainOperator(g), 2.0, 2.0, aug_opts);
    CHECK(std::abs(br.radius.r_hat - ar.radius.r_hat) < 1e-9);
    CHECK(std::abs(br.upper_bound - ar.upper_bound) < 1e-6);
}

TEST_CASE("uniform decay envelope covers every initial time") {
    ClockAugmented aug = clock_augment(sine_rate_base(), 2.0);
    Certificate cert = certified_for(aug.augmented.gain, 2.0, 2.0);
    CHECK(cert.decay_rate == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cert.overshoot == doctest::Approx(1.0).epsilon(1e-9));

    auto base_layout =
        std::make_shared<BlockLayout>(aug.base.sets.dims(), 1);
    std::vector<TruncSeq> x0s{TruncSeq(base_layout, 2.0, {3.0})};
    std::vector<double> t0s{0.0, 1.5707963267948966, 7.0};

    UniformityOptions opts;
    opts.T = 8.0;
    opts.integrate.dt = 1e-3;
    opts.tol = 1e-9;
    UniformityReport rep =
        ueiss_check(aug, cert, t0s, x0s, InputSignal::zero(), opts);

    CHECK(rep.pass);
    REQUIRE(rep.runs.size() == 3);
    CHECK(rep.M == 1.0);
    CHECK(rep.a == 1.0);
    CHECK(rep.worst_margin >= -1e-9);
    for (std::size_t r = 0; r < rep.runs.size(); ++r) {
        CHECK(rep.runs[r].t0 == t0s[r]);
        CHECK(rep.runs[r].envelope.pass);
        CHECK(rep.runs[r].envelope.fit.a > 1.2);
        CHECK(rep.runs[r].envelope.fit.a < 2.8);
    }

    // The integrating factor gives |z(tau)| <= e * e^-tau |z0| with room to
    // spare, so the wider explicit envelope passes strictly.
    UniformityOptions wide = opts;
    wide.envelope_M = std::exp(1.0);
    wide.envelope_a = 1.0;
    UniformityReport rep2 =
        ueiss_check(aug, cert, t0s, x0s, InputSignal::zero(), wide);
    CHECK(rep2.pass);
    CHECK(rep2.M == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
    CHECK(rep2.worst_margin > 0.0);
}

TEST_CASE("growing base fails the uniformity check") {
    // The declared rate is dishonest for dz = +z; the trajectory exposes it.
    SubsystemSpec sub;
    sub.n = 1;
    SumTerm term;
    term.sources.push_back({SourceRef::Kind::self, 0, mat1(1.0)});
    term.post = mat1(1.0);
    sub.terms.push_back(term);
    sub.lipschitz = 1.1;
    sub.V.kind = LocalLyapunov::Kind::quadratic_form;
    sub.V.P = mat1(1.0);
    GainSpec gain({}, 1.0, {}, {}, {}, 1.0, GainSpec::Bounds{1.0, 1.0, 1.0, 1.0, 1.0});
    NetworkSpec base({}, sub, gain, SetSpec::origin(BlockDims::uniform(1)),
                     2.0, 2.0, true);

    ClockAugmented aug = clock_augment(base, 1.0);
    Certificate cert = certified_for(aug.augmented.gain, 2.0, 2.0);
    auto layout = std::make_shared<BlockLayout>(base.sets.dims(), 1);
    std::vector<TruncSeq> x0s{TruncSeq(layout, 2.0, {1.0})};
    std::vector<double> t0s{0.0};

    UniformityOptions opts;
    opts.T = 10.0;
    opts.integrate.dt = 1e-3;
    UniformityReport rep =
        ueiss_check(aug, cert, t0s, x0s, InputSignal::zero(), opts);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_margin < 0.0);
    CHECK(rep.runs[0].envelope.fit.a < -0.5);

    UniformityOptions burst = opts;
    burst.T = 40.0;
    CHECK_THROWS_AS(ueiss_check(aug, cert, t0s, x0s, InputSignal::zero(), burst),
                    NumericError);
}

TEST_CASE("consensus validation rejects malformed declarations") {
    ConsensusSpec good = linear_consensus();
    CHECK_NOTHROW(build_consensus_error_system(good, 8));
    CHECK_NOTHROW(build_consensus_original_system(good, 8));

    ConsensusSpec bad = good;
    bad.alpha.tail_base = 0.4;  // total 0.8
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.alpha.first = 1;
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.band = {{1, 0.5}};  // largest coupling weight must be 1
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.edges = {{2, 3, 0.5}, {3, 2, 0.4}};
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.edges = {{1, 2, 1.0}};  // already declared through the band
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.edges = {{40, 42, 0.7}};  // beyond the materialized agents
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.agent_terms[0].bias = Eigen::VectorXd::Constant(1, 0.5);
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.agent_terms[0].sources.push_back(
        {SourceRef::Kind::rel_block, 1, mat1(0.1)});
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);

    bad = good;
    bad.sigma = 0.0;
    CHECK_THROWS_AS(build_consensus_error_system(bad, 8), SpecError);
}

TEST_CASE("average block stays fixed for driftless agents") {
    ConsensusSpec cs = linear_consensus();
    cs.agent_terms.clear();
    cs.lipschitz = 0.0;

    const std::size_t n_agents = 40;
    NetworkSpec orig = build_consensus_original_system(cs, n_agents);
    auto layout = std::make_shared<BlockLayout>(orig.sets.dims(), n_agents);
    std::vector<double> x0(n_agents, 0.0);
    for (std::size_t i = 0; i < 10; ++i) x0[i] = std::sin(1.0 + double(i));
    Trajectory traj = integrate(truncate(orig, n_agents), x0,
                                InputSignal::zero(), 10.0,
                                IntegrateOptions{.dt = 1e-3});
    CHECK(consensus_conservation_drift(traj, cs) < 1e-10);

    // In error coordinates the average block has no drift terms at all, so
    // it stays bitwise constant.
    NetworkSpec err = build_consensus_error_system(cs, n_agents);
    TruncSeq e0 = consensus_error_initial(
        cs, TruncSeq(layout, 1.0, x0), n_agents);
    Trajectory et = integrate(truncate(err, n_agents + 1), e0.flat(),
                              InputSignal::zero(), 2.0,
                              IntegrateOptions{.dt = 1e-3});
    for (std::size_t k = 0; k < et.samples(); ++k)
        CHECK(et.state(k)[0] == et.state(0)[0]);
}

TEST_CASE("error coordinates track the original simulation") {
    ConsensusSpec cs = linear_consensus();
    const std::size_t n_agents = 40;

    NetworkSpec orig = build_consensus_original_system(cs, n_agents);
    auto layout = std::make_shared<BlockLayout>(orig.sets.dims(), n_agents);
    std::vector<double> x0(n_agents, 0.0);
    for (std::size_t i = 0; i < 8; ++i) x0[i] = std::cos(0.7 * double(i)) + 0.5;
    Trajectory ot = integrate(truncate(orig, n_agents), x0,
                              InputSignal::zero(), 5.0,
                              IntegrateOptions{.dt = 1e-3});

    NetworkSpec err = build_consensus_error_system(cs, n_agents);
    TruncSeq e0 = consensus_error_initial(
        cs, TruncSeq(layout, 1.0, x0), n_agents);
    Trajectory et = integrate(truncate(err, n_agents + 1), e0.flat(),
                              InputSignal::zero(), 5.0,
                              IntegrateOptions{.dt = 1e-3});

    CHECK(consensus_coordinate_gap(ot, et, cs) < 1e-8);
}

TEST_CASE("consensus metrics bound the simulated decay") {
    ConsensusSpec cs = linear_consensus();
    const std::size_t n_agents = 40;
    NetworkSpec err = build_consensus_error_system(cs, n_agents);
    auto orig_layout = std::make_shared<BlockLayout>(
        BlockDims::uniform(1), n_agents);
    std::vector<double> x0(n_agents, 0.0);
    for (std::size_t i = 0; i < 8; ++i) x0[i] = std::cos(0.7 * double(i)) + 0.5;
    TruncSeq e0 = consensus_error_initial(
        cs, TruncSeq(orig_layout, 1.0, x0), n_agents);
    Trajectory et = integrate(truncate(err, n_agents + 1), e0.flat(),
                              InputSignal::zero(), 5.0,
                              IntegrateOptions{.dt = 1e-3});

    ConsensusOptions copts;
    copts.n_modes = 8;
    ConsensusReport rep = consensus_metrics(et, cs, copts);
    CHECK(rep.fit_valid);
    CHECK(rep.fit.a > 0.2);
    CHECK(rep.l1_envelope.pass);
    CHECK(rep.scaled_sum.pass);
    CHECK(rep.pass);
    CHECK(rep.alpha_min == doctest::Approx(0.00390625).epsilon(1e-14));
    REQUIRE(rep.modes.size() == 8);
    for (std::size_t k = 0; k < rep.modes.size(); ++k) {
        CHECK(rep.modes[k].mode == k);
        CHECK(rep.modes[k].alpha ==
              doctest::Approx(std::pow(0.5, double(k + 1))).epsilon(1e-14));
        CHECK(rep.modes[k].worst_margin >= -1e-9);
    }

    // Explicit, deliberately loose constants still pass.
    ConsensusOptions loose;
    loose.M = 5.0;
    loose.a = 0.2;
    loose.n_modes = 4;
    ConsensusReport rep2 = consensus_metrics(et, cs, loose);
    CHECK(rep2.pass);
    CHECK(rep2.M == 5.0);
    CHECK(rep2.a == 0.2);

    // Zero initial error stays zero; every bound is tight at 0.
    TruncSeq zero = TruncSeq::zeros(et.layout, 1.0);
    Trajectory zt = integrate(truncate(err, n_agents + 1), zero.flat(),
                              InputSignal::zero(), 1.0,
                              IntegrateOptions{.dt = 1e-3});
    ConsensusReport rep0 = consensus_metrics(zt, cs, copts);
    CHECK(rep0.pass);
    CHECK_FALSE(rep0.fit_valid);
    for (const ModeBound& mb : rep0.modes) CHECK(mb.peak == 0.0);
}

TEST_CASE("observer composite matches the closed-form error dynamics") {
    ObserverSpec os = luenberger_chain(2.5);
    NetworkSpec net = build_observer_composite(os);
    const std::size_t n_blocks = 30;

    std::vector<double> z0(2 * n_blocks, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
        z0[2 * i] = std::sin(1.0 + double(i));
        z0[2 * i + 1] = std::cos(2.0 * double(i));
    }
    Trajectory zt = integrate(truncate(net, n_blocks), z0, InputSignal::zero(),
                              5.0, IntegrateOptions{.dt = 1e-3});

    // The error e_i = x_i - xhat_i closes on de_i = -2 e_i + 0.2 (e_{i-1} +
    // e_{i+1}), which is the chain declaration with a = -2, c = 0.2.
    NetworkSpec echain = chain_net(-2.0, 0.2, false);
    std::vector<double> e0(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) e0[i] = z0[2 * i] - z0[2 * i + 1];
    Trajectory et = integrate(truncate(echain, n_blocks), e0,
                              InputSignal::zero(), 5.0,
                              IntegrateOptions{.dt = 1e-3});

    REQUIRE(zt.samples() == et.samples());
    for (std::size_t k = 0; k < zt.samples(); k += 50)
        for (std::size_t i = 0; i < n_blocks; ++i) {
            const double e = zt.state(k)[2 * i] - zt.state(k)[2 * i + 1];
            CHECK(std::abs(e - et.state(k)[i]) < 1e-8);
        }
}

TEST_CASE("diagonal distance identity and certified observer verdict") {
    ObserverSpec os = luenberger_chain(2.5);
    Certificate cert = certified_for(os.gain, 2.0, 2.0);
    CHECK(cert.lambda_inf == doctest::Approx(3.2).epsilon(1e-9));
    CHECK(cert.decay_rate == doctest::Approx(1.6).epsilon(1e-9));
    CHECK(cert.r_hat <= 1.0 / 9.0 + 1e-9);
    CHECK(cert.r_hat > 0.1108);

    NetworkSpec net = build_observer_composite(os);
    const std::size_t n_blocks = 30;
    std::vector<double> z0(2 * n_blocks, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
        z0[2 * i] = std::sin(1.0 + double(i));
        z0[2 * i + 1] = std::cos(2.0 * double(i));
    }
    Trajectory zt = integrate(truncate(net, n_blocks), z0, InputSignal::zero(),
                              5.0, IntegrateOptions{.dt = 1e-3});

    ObserverReport rep = observer_error_decay(zt, os, cert);
    CHECK(rep.identity_worst <= 1e-12);
    CHECK(rep.envelope.pass);
    CHECK(rep.verdict == ObserverVerdict::yes);
    CHECK(rep.envelope.fit.a > 1.4);
    CHECK(rep.envelope.fit.a < 1.9);

    double e0sq = 0.0;
    for (std::size_t i = 0; i < n_blocks; ++i) {
        const double e = z0[2 * i] - z0[2 * i + 1];
        e0sq += e * e;
    }
    CHECK(rep.error.front() == doctest::Approx(std::sqrt(e0sq)).epsilon(1e-12));
    CHECK(rep.error.back() < 1e-2 * rep.error.front());
}

TEST_CASE("observer verdict without correction is no") {
    ObserverSpec os = luenberger_chain(0.0);
    Certificate cert = certified_for(os.gain, 2.0, 2.0);

    NetworkSpec net = build_observer_composite(os);
    const std::size_t n_blocks = 20;
    std::vector<double> z0(2 * n_blocks, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        z0[2 * i] = 1.0 + 0.1 * double(i);
        z0[2 * i + 1] = -0.5;
    }
    Trajectory zt = integrate(truncate(net, n_blocks), z0, InputSignal::zero(),
                              5.0, IntegrateOptions{.dt = 1e-3});

    ObserverReport rep = observer_error_decay(zt, os, cert);
    CHECK(rep.verdict == ObserverVerdict::no);
    CHECK_FALSE(rep.envelope.pass);
    CHECK(rep.envelope.fit.a < -0.4);
}

TEST_CASE("exact initialization keeps the observer error at zero") {
    ObserverSpec os = luenberger_chain(2.5);
    Certificate cert = certified_for(os.gain, 2.0, 2.0);
    NetworkSpec net = build_observer_composite(os);

    const std::size_t n_blocks = 12;
    std::vector<double> z0(2 * n_blocks, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
        z0[2 * i] = std::sin(0.9 * double(i) + 0.3);
        z0[2 * i + 1] = z0[2 * i];
    }
    Trajectory zt = integrate(truncate(net, n_blocks), z0, InputSignal::zero(),
                              2.0, IntegrateOptions{.dt = 1e-3});

    ObserverReport rep = observer_error_decay(zt, os, cert);
    CHECK(rep.verdict == ObserverVerdict::yes);
    for (double e : rep.error) CHECK(e <= 1e-12);
}

TEST_CASE("observer spec validation") {
    ObserverSpec os = luenberger_chain(2.5);
    CHECK_NOTHROW(build_observer_composite(os));

    ObserverSpec bad = os;
    bad.K = Eigen::MatrixXd::Zero(1, 2);  // output width mismatch
    CHECK_THROWS_AS(build_observer_composite(bad), SpecError);

    bad = os;
    bad.coupling.push_back({0, mat1(0.3)});  // self offsets are not couplings
    CHECK_THROWS_AS(build_observer_composite(bad), SpecError);
}
