#include "smallgain/report.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "json.hpp"

#include "smallgain/errors.hpp"

namespace smallgain {
namespace {

using ojson = nlohmann::ordered_json;

// Infinities have no JSON encoding; nlohmann would emit null anyway, this
// makes the substitution explicit.
ojson fin(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

ojson meta_json(const ReportMeta& meta) {
    ojson j;
    j["command"] = meta.command;
    j["seed"] = meta.seed;
    if (!meta.fixed_clock)
        j["generated_at"] = static_cast<long long>(std::time(nullptr));
    return j;
}

ojson margin_json(const MarginSeries& m) {
    ojson j;
    j["check"] = m.check;
    j["pass"] = m.pass;
    j["tol"] = m.tol;
    j["worst_margin"] = fin(m.worst);
    j["worst_time"] = m.worst_time;
    j["samples"] = m.times.size();
    j["flagged"] = m.flagged.size();
    return j;
}

ojson fit_json(const DecayFit& f) {
    ojson j;
    j["M"] = fin(f.M);
    j["a"] = fin(f.a);
    j["residual"] = fin(f.residual);
    j["v0"] = fin(f.v0);
    j["samples"] = f.samples;
    return j;
}

ojson envelope_json(const EnvelopeReport& e) {
    ojson j;
    j["M"] = e.M;
    j["a"] = e.a;
    j["gain_value"] = e.gain_value;
    j["offset"] = e.offset;
    j["initial"] = e.initial;
    j["pass"] = e.pass;
    j["worst_margin"] = fin(e.margins.worst);
    j["worst_time"] = e.margins.worst_time;
    j["fit_valid"] = e.fit_valid;
    j["fit"] = e.fit_valid ? fit_json(e.fit) : ojson(nullptr);
    return j;
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::certified: return "certified";
        case Verdict::refuted: return "refuted";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

const char* mu_status_name(MuStatus s) {
    switch (s) {
        case MuStatus::ok: return "ok";
        case MuStatus::bound_violation: return "bound_violation";
        case MuStatus::verification_failed: return "verification_failed";
    }
    return "verification_failed";
}

ojson analyze_body(const AnalyzeReport& rep) {
    ojson j;
    j["verdict"] = verdict_name(rep.verdict);
    j["reason"] = rep.reason;

    ojson cols;
    cols["cap"] = rep.colsums.cap;
    cols["limit"] = fin(rep.colsums.limit);
    cols["bounded"] = rep.colsums.bounded;
    cols["estimates"] = rep.colsums.estimates;
    j["column_sums"] = cols;

    ojson rad;
    rad["r_hat"] = rep.radius.r_hat;
    rad["tol"] = rep.radius.tol;
    rad["successive_converged"] = rep.radius.successive_converged;
    ojson per = ojson::array();
    for (const TruncationBound& b : rep.radius.per_n) {
        ojson e;
        e["n"] = b.n;
        e["lower"] = b.lower;
        e["upper_local"] = b.upper_local;
        e["iterations"] = b.iterations;
        e["converged"] = b.converged;
        per.push_back(e);
    }
    rad["per_n"] = per;
    j["radius"] = rad;

    j["upper_bound"] = fin(rep.upper_bound);
    j["upper_certified"] = rep.upper_cert;

    if (rep.mu) {
        const MuResult& m = *rep.mu;
        ojson mu;
        mu["status"] = mu_status_name(m.status);
        mu["terms"] = m.terms;
        mu["s"] = m.s;
        mu["tail_bound_met"] = m.tail_bound_met;
        mu["lambda_inf"] = fin(m.lambda_inf);
        mu["worst_margin"] = fin(m.worst_margin);
        mu["worst_index"] = m.worst_index;
        mu["lemma_bound"] = m.lemma_bound;
        mu["meets_lemma_bound"] = m.meets_lemma_bound;
        mu["rho"] = m.rho;
        mu["r_hat"] = m.r_hat;
        std::vector<double> head(m.mu.prefix.begin(),
                                 m.mu.prefix.begin() +
                                     static_cast<long>(std::min<std::size_t>(
                                         m.mu.prefix.size(), 16)));
        mu["prefix_head"] = head;
        mu["tail"] = m.mu.tail;
        j["mu"] = mu;
    } else {
        j["mu"] = nullptr;
    }

    if (rep.certificate) {
        const Certificate& c = *rep.certificate;
        ojson cert;
        cert["lambda_inf"] = c.lambda_inf;
        cert["p"] = c.p;
        cert["q"] = c.q;
        cert["input_gain"] = c.input_gain;
        cert["coercivity_lo"] = c.coercivity_lo;
        cert["coercivity_hi"] = c.coercivity_hi;
        cert["r_hat"] = c.r_hat;
        cert["r_upper"] = fin(c.r_upper);
        cert["overshoot"] = c.overshoot;
        cert["decay_rate"] = c.decay_rate;
        j["certificate"] = cert;
    } else {
        j["certificate"] = nullptr;
    }
    return j;
}

std::string finish(ojson j) { return j.dump(2) + "\n"; }

std::FILE* open_csv(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw SpecError("cannot open output file: " + path);
    return f;
}

}  // namespace

std::string analyze_report_json(const AnalyzeReport& rep,
                                const ReportMeta& meta) {
    ojson j = meta_json(meta);
    j["analysis"] = analyze_body(rep);
    j["exit_code"] = rep.verdict == Verdict::certified  ? 0
                     : rep.verdict == Verdict::refuted ? 1
                                                        : 2;
    return finish(std::move(j));
}

std::string simulate_report_json(const SimulateResult& res,
                                 const ReportMeta& meta) {
    ojson j = meta_json(meta);
    j["blocks"] = res.blocks;
    j["T"] = res.T;
    j["dt"] = res.dt;
    j["input_sup"] = res.input_sup;
    j["analysis"] = res.analysis ? analyze_body(*res.analysis)
                                 : ojson(nullptr);
    j["envelope"] =
        res.envelope ? envelope_json(*res.envelope) : ojson(nullptr);
    j["practical"] =
        res.practical ? envelope_json(*res.practical) : ojson(nullptr);
    j["dissipation"] =
        res.dissipation ? margin_json(*res.dissipation) : ojson(nullptr);
    j["coercivity"] =
        res.coercivity ? margin_json(*res.coercivity) : ojson(nullptr);
    j["monotone"] =
        res.monotone ? margin_json(*res.monotone) : ojson(nullptr);
    j["max_defect"] = res.max_defect;
    j["overflow"] = res.overflow;
    j["exit_code"] = res.exit_code;
    return finish(std::move(j));
}

std::string timevarying_report_json(const TimevaryingResult& res,
                                    const ReportMeta& meta) {
    ojson j = meta_json(meta);
    j["lambda0"] = res.lambda0;
    j["analysis"] = res.analysis ? analyze_body(*res.analysis)
                                 : ojson(nullptr);
    j["M"] = res.uniformity.M;
    j["a"] = res.uniformity.a;
    j["pass"] = res.uniformity.pass;
    j["worst_margin"] = fin(res.uniformity.worst_margin);
    ojson runs = ojson::array();
    for (const UniformityRun& r : res.uniformity.runs) {
        ojson e;
        e["t0"] = r.t0;
        e["x0_index"] = r.x0_index;
        e["pass"] = r.envelope.pass;
        e["worst_margin"] = fin(r.envelope.margins.worst);
        e["initial"] = r.envelope.initial;
        e["fit_valid"] = r.envelope.fit_valid;
        e["fit_a"] = r.envelope.fit_valid ? fin(r.envelope.fit.a)
                                          : ojson(nullptr);
        runs.push_back(e);
    }
    j["runs"] = runs;
    j["exit_code"] = res.exit_code;
    return finish(std::move(j));
}

std::string consensus_report_json(const ConsensusResult& res,
                                  const ReportMeta& meta) {
    ojson j = meta_json(meta);
    j["agents"] = res.agents;
    j["conservation_drift"] = res.conservation_drift;
    j["coordinate_gap"] = res.coordinate_gap;
    j["l1_envelope"] = margin_json(res.metrics.l1_envelope);
    j["scaled_sum"] = margin_json(res.metrics.scaled_sum);
    j["fit_valid"] = res.metrics.fit_valid;
    j["fit"] = res.metrics.fit_valid ? fit_json(res.metrics.fit)
                                     : ojson(nullptr);
    j["M"] = res.metrics.M;
    j["a"] = res.metrics.a;
    j["alpha_min"] = res.metrics.alpha_min;
    ojson modes = ojson::array();
    for (const ModeBound& m : res.metrics.modes) {
        ojson e;
        e["mode"] = m.mode;
        e["alpha"] = m.alpha;
        e["peak"] = m.peak;
        e["worst_margin"] = fin(m.worst_margin);
        modes.push_back(e);
    }
    j["modes"] = modes;
    j["pass"] = res.metrics.pass;
    j["exit_code"] = res.exit_code;
    return finish(std::move(j));
}

std::string observer_report_json(const ObserverResult& res,
                                 const ReportMeta& meta) {
    ojson j = meta_json(meta);
    j["blocks"] = res.blocks;
    j["analysis"] = res.analysis ? analyze_body(*res.analysis)
                                 : ojson(nullptr);
    j["identity_worst"] = res.report.identity_worst;
    ojson err;
    err["initial"] = res.report.error.empty() ? 0.0 : res.report.error.front();
    err["final"] = res.report.error.empty() ? 0.0 : res.report.error.back();
    double peak = 0.0;
    for (double v : res.report.error) peak = std::max(peak, v);
    err["peak"] = peak;
    err["samples"] = res.report.error.size();
    j["error"] = err;
    j["envelope"] = envelope_json(res.report.envelope);
    j["verdict"] = res.report.verdict == ObserverVerdict::yes  ? "yes"
                   : res.report.verdict == ObserverVerdict::no ? "no"
                                                               : "inconclusive";
    j["exit_code"] = res.exit_code;
    return finish(std::move(j));
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          std::size_t stride) {
    if (stride == 0) stride = 1;
    std::FILE* f = open_csv(path);
    std::fputs("t,block,coord,value\n", f);
    const BlockLayout& L = *traj.layout;
    for (std::size_t k = 0; k < traj.samples();) {
        const std::span<const double> s = traj.state(k);
        for (std::size_t i = 0; i < L.blocks(); ++i) {
            const std::span<const double> b = L.block(s, i);
            for (std::size_t c = 0; c < b.size(); ++c)
                std::fprintf(f, "%.17g,%zu,%zu,%.17g\n", traj.times[k], i, c,
                             b[c]);
        }
        if (k + 1 == traj.samples()) break;
        k = std::min(k + stride, traj.samples() - 1);
    }
    std::fclose(f);
}

void write_margins_csv(const std::string& path,
                       const std::vector<const MarginSeries*>& series) {
    std::FILE* f = open_csv(path);
    std::fputs("t,check,margin\n", f);
    for (const MarginSeries* m : series) {
        if (!m) continue;
        for (std::size_t k = 0; k < m->times.size(); ++k)
            std::fprintf(f, "%.17g,%s,%.17g\n", m->times[k],
                         m->check.c_str(), m->margins[k]);
    }
    std::fclose(f);
}

void write_consensus_csv(const std::string& path, const Trajectory& traj,
                         const ConsensusSpec& cs, std::size_t n_modes,
                         std::size_t stride) {
    if (stride == 0) stride = 1;
    const BlockLayout& L = *traj.layout;
    require(L.blocks() >= 2, "consensus series needs error blocks");
    const std::size_t n_err = L.blocks() - 1;
    const std::size_t modes = std::min(n_modes, n_err);
    std::FILE* f = open_csv(path);
    std::fputs("t,e_l1,mode,mode_err\n", f);
    for (std::size_t k = 0; k < traj.samples();) {
        const std::span<const double> s = traj.state(k);
        double e1 = 0.0;
        std::vector<double> dist(modes, 0.0);
        for (std::size_t i = 1; i <= n_err; ++i) {
            const std::span<const double> b = L.block(s, i);
            double sq = 0.0;
            for (double v : b) sq += v * v;
            const double bn = std::sqrt(sq);
            e1 += bn;
            if (i - 1 < modes) dist[i - 1] = bn / cs.alpha.at(i - 1);
        }
        for (std::size_t m = 0; m < modes; ++m)
            std::fprintf(f, "%.17g,%.17g,%zu,%.17g\n", traj.times[k], e1, m,
                         dist[m]);
        if (k + 1 == traj.samples()) break;
        k = std::min(k + stride, traj.samples() - 1);
    }
    std::fclose(f);
}

}  // namespace smallgain