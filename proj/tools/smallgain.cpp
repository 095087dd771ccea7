#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smallgain/apps.hpp"
#include "smallgain/certify.hpp"
#include "smallgain/config.hpp"
#include "smallgain/errors.hpp"
#include "smallgain/gainop.hpp"
#include "smallgain/netsim.hpp"
#include "smallgain/report.hpp"
#include "smallgain/seqspace.hpp"

namespace fs = std::filesystem;
using namespace smallgain;

namespace {

struct Args {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool fixed_clock = false;
};

void add_common(CLI::App* cmd, Args& args) {
    cmd->add_option("--config", args.config, "scenario file (JSON)")
        ->required();
    cmd->add_option("--out", args.out, "output directory");
    auto* seed = cmd->add_option("--seed", args.seed,
                                 "override the scenario seed");
    cmd->add_flag("--fixed-clock", args.fixed_clock,
                  "omit wall-clock fields from the report");
    cmd->parse_complete_callback(
        [&args, seed] { args.seed_given = seed->count() > 0; });
}

Scenario load(const Args& args) {
    Scenario sc = load_scenario(args.config);
    if (args.seed_given) sc.seed = args.seed;
    return sc;
}

ReportMeta meta_for(const char* command, const Scenario& sc,
                    const Args& args) {
    return ReportMeta{command, sc.seed, args.fixed_clock};
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SpecError("cannot open output file: " + path.string());
    out << body;
}

fs::path out_dir(const Args& args) {
    fs::path dir(args.out);
    fs::create_directories(dir);
    return dir;
}

int verdict_exit(Verdict v) {
    switch (v) {
        case Verdict::certified: return 0;
        case Verdict::refuted: return 1;
        default: return 2;
    }
}

const char* verdict_word(Verdict v) {
    switch (v) {
        case Verdict::certified: return "certified";
        case Verdict::refuted: return "refuted";
        default: return "inconclusive";
    }
}

int cmd_analyze(const Args& args) {
    Scenario sc = load(args);
    const GainSpec* gs = sc.network ? &sc.network->gain
                         : sc.gain  ? &*sc.gain
                                    : nullptr;
    if (!gs) throw SpecError("the analyze command needs a gain or network section");
    double p = sc.network ? sc.network->p : 2.0;
    double q = sc.network ? sc.network->q : 2.0;

    GainOperator op(*gs);
    AnalyzeReport rep = analyze(op, p, q, sc.analyze);

    fs::path dir = out_dir(args);
    write_text(dir / "report.json",
               analyze_report_json(rep, meta_for("analyze", sc, args)));
    std::printf("analyze: %s (r_hat=%.10g) -> %s\n", verdict_word(rep.verdict),
                rep.radius.r_hat, (dir / "report.json").string().c_str());
    if (rep.verdict != Verdict::certified)
        std::printf("analyze: %s\n", rep.reason.c_str());
    return verdict_exit(rep.verdict);
}

int cmd_simulate(const Args& args) {
    Scenario sc = load(args);
    if (!sc.network) throw SpecError("the simulate command needs a network section");
    if (!sc.simulate) throw SpecError("the simulate command needs a simulate section");
    const NetworkSpec& net = *sc.network;
    const SimulateParams& par = *sc.simulate;

    SimulateResult res;
    res.blocks = par.blocks;
    res.T = par.T;
    res.dt = par.integrate.dt;
    res.input_sup = par.input.sup_norm_q();

    double M = 1.0;
    double a = 0.0;
    std::function<double(double)> gamma_fn = [](double) { return 0.0; };
    if (par.envelope) {
        M = par.envelope->M;
        a = par.envelope->a;
        gamma_fn = [g = par.envelope->gain_value](double) { return g; };
    } else {
        GainOperator op(net.gain);
        res.analysis = analyze(op, net.p, net.q, sc.analyze);
        if (!res.analysis->certificate) {
            res.exit_code = verdict_exit(res.analysis->verdict);
            fs::path dir = out_dir(args);
            write_text(dir / "report.json",
                       simulate_report_json(res, meta_for("simulate", sc, args)));
            std::printf("simulate: %s before integration (%s)\n",
                        verdict_word(res.analysis->verdict),
                        res.analysis->reason.c_str());
            return res.exit_code;
        }
        const Certificate& cert = *res.analysis->certificate;
        M = cert.overshoot;
        a = cert.decay_rate;
        gamma_fn = [cert](double r) { return cert.iss_gain(r); };
    }

    TruncatedSystem sys = truncate(net, par.blocks);
    std::vector<double> x0 = materialize(par.x0, sys.layout(), sc.seed);
    Trajectory traj = integrate(sys, x0, par.input, par.T, par.integrate);
    res.max_defect = traj.max_defect;
    res.overflow = traj.overflow;

    res.envelope = check_eiss_envelope(traj, net.sets, M, a, gamma_fn,
                                       res.input_sup, par.tol);
    if (std::isfinite(net.sets.sup_norm(net.p)))
        res.practical = practical_iss_offset(traj, net.sets, M, a, gamma_fn,
                                             res.input_sup, par.tol);
    if (res.analysis && res.analysis->certificate) {
        const Certificate& cert = *res.analysis->certificate;
        res.dissipation = check_composite_dissipation(cert, net, traj, par.input);
        res.coercivity = check_coercivity(cert, net, traj);
        if (par.input.is_zero())
            res.monotone = check_monotone_comparison(cert, net, traj);
    }

    bool all = res.envelope->pass;
    if (res.practical) all = all && res.practical->pass;
    if (res.dissipation) all = all && res.dissipation->pass;
    if (res.coercivity) all = all && res.coercivity->pass;
    if (res.monotone) all = all && res.monotone->pass;
    res.exit_code = res.overflow ? 2 : all ? 0 : 1;

    fs::path dir = out_dir(args);
    write_text(dir / "report.json",
               simulate_report_json(res, meta_for("simulate", sc, args)));
    write_trajectory_csv((dir / "trajectory.csv").string(), traj,
                         par.csv_stride);
    std::vector<const MarginSeries*> series{&res.envelope->margins};
    if (res.practical) series.push_back(&res.practical->margins);
    if (res.dissipation) series.push_back(&*res.dissipation);
    if (res.coercivity) series.push_back(&*res.coercivity);
    if (res.monotone) series.push_back(&*res.monotone);
    write_margins_csv((dir / "margins.csv").string(), series);

    std::printf("simulate: %s (envelope worst=%.3g, defect=%.3g) -> %s\n",
                res.exit_code == 0   ? "pass"
                : res.exit_code == 1 ? "fail"
                                     : "inconclusive",
                res.envelope->margins.worst, res.max_defect,
                dir.string().c_str());
    return res.exit_code;
}

int cmd_timevarying(const Args& args) {
    Scenario sc = load(args);
    if (!sc.network) throw SpecError("the timevarying command needs a network section");
    if (!sc.timevarying) throw SpecError("the timevarying command needs a timevarying section");
    const TimevaryingParams& par = *sc.timevarying;
    if (par.t0_samples.empty() || par.x0_samples.empty())
        throw SpecError("the timevarying command needs at least one start time and one initial state");

    ClockAugmented aug = clock_augment(*sc.network, par.lambda0);
    TimevaryingResult res;
    res.lambda0 = par.lambda0;

    GainOperator op(aug.augmented.gain);
    res.analysis = analyze(op, aug.augmented.p, aug.augmented.q, sc.analyze);
    fs::path dir = out_dir(args);
    if (!res.analysis->certificate) {
        res.exit_code = verdict_exit(res.analysis->verdict);
        write_text(dir / "report.json",
                   timevarying_report_json(res, meta_for("timevarying", sc, args)));
        std::printf("timevarying: %s before integration (%s)\n",
                    verdict_word(res.analysis->verdict),
                    res.analysis->reason.c_str());
        return res.exit_code;
    }

    auto layout = std::make_shared<BlockLayout>(sc.network->sets.dims(),
                                                par.blocks);
    std::vector<TruncSeq> x0s;
    x0s.reserve(par.x0_samples.size());
    for (std::size_t i = 0; i < par.x0_samples.size(); ++i)
        x0s.emplace_back(layout, sc.network->p,
                         materialize(par.x0_samples[i], *layout, sc.seed + i));

    res.uniformity = ueiss_check(aug, *res.analysis->certificate,
                                 par.t0_samples, x0s, InputSignal::zero(),
                                 par.options);
    res.exit_code = res.uniformity.pass ? 0 : 1;

    write_text(dir / "report.json",
               timevarying_report_json(res, meta_for("timevarying", sc, args)));
    std::printf("timevarying: %s (M=%.6g, a=%.6g, worst=%.3g over %zu runs) -> %s\n",
                res.uniformity.pass ? "pass" : "fail", res.uniformity.M,
                res.uniformity.a, res.uniformity.worst_margin,
                res.uniformity.runs.size(), dir.string().c_str());
    return res.exit_code;
}

int cmd_consensus(const Args& args) {
    Scenario sc = load(args);
    if (!sc.consensus) throw SpecError("the consensus command needs a consensus section");
    if (!sc.consensus_run) throw SpecError("the consensus command needs a consensus_run section");
    const ConsensusSpec& cs = *sc.consensus;
    const ConsensusRunParams& par = *sc.consensus_run;

    NetworkSpec orig = build_consensus_original_system(cs, par.blocks);
    NetworkSpec errs = build_consensus_error_system(cs, par.blocks);

    TruncatedSystem sys_o = truncate(orig, par.blocks);
    auto layout = std::make_shared<BlockLayout>(
        BlockDims::uniform(cs.n), par.blocks);
    std::vector<double> x0 = materialize(par.x0, *layout, sc.seed);
    TruncSeq x0seq(layout, 1.0, x0);
    TruncSeq e0 = consensus_error_initial(cs, x0seq, par.blocks);

    Trajectory ot = integrate(sys_o, x0, InputSignal::zero(), par.T,
                              par.integrate);
    TruncatedSystem sys_e = truncate(errs, par.blocks + 1);
    Trajectory et = integrate(sys_e, e0.flat(), InputSignal::zero(), par.T,
                              par.integrate);

    ConsensusResult res;
    res.agents = par.blocks;
    res.conservation_drift = consensus_conservation_drift(ot, cs);
    res.coordinate_gap = consensus_coordinate_gap(ot, et, cs);
    res.metrics = consensus_metrics(et, cs, par.metrics);
    res.exit_code = (ot.overflow || et.overflow) ? 2
                    : res.metrics.pass           ? 0
                                                 : 1;

    fs::path dir = out_dir(args);
    write_text(dir / "report.json",
               consensus_report_json(res, meta_for("consensus", sc, args)));
    write_trajectory_csv((dir / "trajectory.csv").string(), ot,
                         par.csv_stride);
    write_consensus_csv((dir / "consensus.csv").string(), et, cs,
                        par.metrics.n_modes, par.csv_stride);
    write_margins_csv((dir / "margins.csv").string(),
                      {&res.metrics.l1_envelope, &res.metrics.scaled_sum});

    std::printf("consensus: %s (drift=%.3g, gap=%.3g, rate=%.6g) -> %s\n",
                res.exit_code == 0   ? "pass"
                : res.exit_code == 1 ? "fail"
                                     : "inconclusive",
                res.conservation_drift, res.coordinate_gap, res.metrics.a,
                dir.string().c_str());
    return res.exit_code;
}

int cmd_observer(const Args& args) {
    Scenario sc = load(args);
    if (!sc.observer) throw SpecError("the observer command needs an observer section");
    if (!sc.observer_run) throw SpecError("the observer command needs an observer_run section");
    const ObserverSpec& os = *sc.observer;
    const ObserverRunParams& par = *sc.observer_run;

    NetworkSpec net = build_observer_composite(os);
    ObserverResult res;
    res.blocks = par.blocks;

    GainOperator op(os.gain);
    res.analysis = analyze(op, net.p, net.q, sc.analyze);
    fs::path dir = out_dir(args);
    if (!res.analysis->certificate) {
        res.exit_code = verdict_exit(res.analysis->verdict);
        write_text(dir / "report.json",
                   observer_report_json(res, meta_for("observer", sc, args)));
        std::printf("observer: %s before integration (%s)\n",
                    verdict_word(res.analysis->verdict),
                    res.analysis->reason.c_str());
        return res.exit_code;
    }

    // Plant and observer halves draw from adjacent seed streams so a random
    // initial guess never equals the random plant state.
    BlockLayout half(BlockDims::uniform(os.n), par.blocks);
    std::vector<double> xs = materialize(par.x0, half, sc.seed);
    std::vector<double> xh = materialize(par.xhat0, half, sc.seed + 1);
    std::size_t n = static_cast<std::size_t>(os.n);
    std::vector<double> z0(2 * n * par.blocks);
    for (std::size_t b = 0; b < par.blocks; ++b)
        for (std::size_t k = 0; k < n; ++k) {
            z0[b * 2 * n + k] = xs[b * n + k];
            z0[b * 2 * n + n + k] = xh[b * n + k];
        }

    TruncatedSystem sys = truncate(net, par.blocks);
    Trajectory traj = integrate(sys, z0, InputSignal::zero(), par.T,
                                par.integrate);
    res.report = observer_error_decay(traj, os, *res.analysis->certificate,
                                      par.tol);
    res.exit_code = traj.overflow ? 2
                    : res.report.verdict == ObserverVerdict::yes ? 0
                    : res.report.verdict == ObserverVerdict::no  ? 1
                                                                 : 2;

    write_text(dir / "report.json",
               observer_report_json(res, meta_for("observer", sc, args)));
    write_trajectory_csv((dir / "trajectory.csv").string(), traj,
                         par.csv_stride);
    write_margins_csv((dir / "margins.csv").string(),
                      {&res.report.envelope.margins});

    double peak = 0.0;
    for (double v : res.report.error) peak = std::max(peak, v);
    std::printf("observer: %s (peak error=%.6g, identity=%.3g) -> %s\n",
                res.report.verdict == ObserverVerdict::yes  ? "yes"
                : res.report.verdict == ObserverVerdict::no ? "no"
                                                            : "inconclusive",
                peak, res.report.identity_worst, dir.string().c_str());
    return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"small-gain certification and simulation for infinite networks"};
    app.require_subcommand(0, 1);

    Args args;
    CLI::App* c_analyze = app.add_subcommand(
        "analyze", "certify a gain operator by spectral radius");
    CLI::App* c_simulate = app.add_subcommand(
        "simulate", "integrate a truncation and check the certificate");
    CLI::App* c_consensus = app.add_subcommand(
        "consensus", "weighted-average consensus decay metrics");
    CLI::App* c_observer = app.add_subcommand(
        "observer", "distributed observer error decay");
    CLI::App* c_timevarying = app.add_subcommand(
        "timevarying", "uniform decay over initial times via a clock block");
    for (CLI::App* c :
         {c_analyze, c_simulate, c_consensus, c_observer, c_timevarying})
        add_common(c, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    try {
        if (c_analyze->parsed()) return cmd_analyze(args);
        if (c_simulate->parsed()) return cmd_simulate(args);
        if (c_consensus->parsed()) return cmd_consensus(args);
        if (c_observer->parsed()) return cmd_observer(args);
        if (c_timevarying->parsed()) return cmd_timevarying(args);
        std::fputs(app.help().c_str(), stdout);
        return 0;
    } catch (const SpecError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
