#include "smallgain/apps.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <variant>

namespace smallgain {
namespace {

// Deepest left-looking relative read of the repeated tail subsystem. Tail
// blocks closer to the clock than this must be materialized, because the
// clock-collision fixup differs per index.
std::size_t left_guard(const SubsystemSpec& tail) {
    long long neg = 0;
    for (const Term& term : tail.terms)
        if (const auto* st = std::get_if<SumTerm>(&term))
            for (const SourceRef& src : st->sources)
                if (src.kind == SourceRef::Kind::rel_block)
                    neg = std::max(neg, -src.index);
    return static_cast<std::size_t>(neg);
}

// Rewrites one subsystem for its augmented position: absolute block ids and
// gather windows shift by one, every coefficient reads the clock, and a
// relative read that lands exactly on the clock is dropped because the
// original truncation held that block at zero.
SubsystemSpec shift_for_clock(const SubsystemSpec& base,
                              std::size_t aug_index) {
    SubsystemSpec out = base;
    out.terms.clear();
    for (const Term& term : base.terms) {
        if (const auto* st = std::get_if<SumTerm>(&term)) {
            SumTerm t = *st;
            t.sources.clear();
            for (SourceRef src : st->sources) {
                if (src.kind == SourceRef::Kind::rel_block &&
                    static_cast<long long>(aug_index) + src.index == 0)
                    continue;
                if (src.kind == SourceRef::Kind::abs_block) src.index += 1;
                t.sources.push_back(std::move(src));
            }
            t.coeff.clock_block = 0;
            out.terms.push_back(std::move(t));
        } else {
            GatherTerm g = std::get<GatherTerm>(term);
            g.weights.first += 1;
            if (g.anchor.kind == SourceRef::Kind::abs_block)
                g.anchor.index += 1;
            g.coeff.clock_block = 0;
            out.terms.push_back(std::move(g));
        }
    }
    return out;
}

SubsystemSpec clock_subsystem() {
    SubsystemSpec clock;
    clock.n = 1;
    clock.m = 0;
    SumTerm drift;
    drift.bias = Eigen::VectorXd::Constant(1, 1.0);
    drift.post = Eigen::MatrixXd::Identity(1, 1);
    clock.terms.push_back(drift);
    clock.lipschitz = 0.0;
    clock.V.kind = LocalLyapunov::Kind::quadratic_form;
    clock.V.P = Eigen::MatrixXd::Zero(1, 1);
    return clock;
}

// Row i of the augmented gain is row i-1 of the base with every column
// shifted by one; row 0 and column 0 stay empty. Enough base rows are
// materialized that the copied Toeplitz rule never reaches column 0.
GainSpec augment_gain(const GainSpec& bg, double lambda0) {
    const std::size_t ext = bg.structural_extent();

    std::vector<double> lambda{lambda0};
    std::vector<double> gamma_u{bg.gamma_u(ext)};
    for (std::size_t i = 0; i < ext; ++i) {
        lambda.push_back(bg.lambda(i));
        gamma_u.push_back(bg.gamma_u(i));
    }

    std::size_t guard = 0;
    for (const auto& [off, coeff] : bg.gamma_tail().offsets)
        if (off < 0) guard = std::max(guard, static_cast<std::size_t>(-off));
    const std::size_t rows_needed = std::max(bg.gamma_rows().size(), guard);

    std::vector<GainSpec::Row> rows(rows_needed + 1);
    for (std::size_t b = 0; b < rows_needed; ++b) {
        GainSpec::Row& row = rows[b + 1];
        if (b < bg.gamma_rows().size()) {
            for (const auto& [col, v] : bg.gamma_rows()[b])
                row.push_back({col + 1, v});
        } else {
            for (const auto& [off, v] : bg.gamma_tail().offsets) {
                const long long col = static_cast<long long>(b) + off;
                if (col >= 0)
                    row.push_back({static_cast<std::size_t>(col) + 1, v});
            }
        }
    }

    GainSpec::Bounds nb = bg.bounds();
    nb.lambda_lo = std::min(nb.lambda_lo, lambda0);
    nb.lambda_hi = std::max(nb.lambda_hi, lambda0);
    return GainSpec(std::move(lambda), bg.lambda_tail(), std::move(rows),
                    bg.gamma_tail(), std::move(gamma_u), bg.gamma_u(ext), nb);
}

}  // namespace

ClockAugmented clock_augment(const NetworkSpec& tv, double lambda0) {
    require(tv.time_varying,
            "clock augmentation needs a time-varying network");
    require(std::isfinite(lambda0) && lambda0 > 0.0,
            "clock decay rate must be positive");

    const std::size_t base_prefix =
        std::max(tv.prefix.size(), left_guard(tv.tail));

    std::vector<SubsystemSpec> prefix;
    prefix.reserve(base_prefix + 1);
    prefix.push_back(clock_subsystem());
    for (std::size_t b = 0; b < base_prefix; ++b)
        prefix.push_back(shift_for_clock(tv.subsystem(b), b + 1));
    SubsystemSpec tail = shift_for_clock(tv.tail, base_prefix + 1);

    const BlockDims& bd = tv.sets.dims();
    std::vector<int> dim_prefix{1};
    for (std::size_t i = 0; i < bd.prefix_size(); ++i)
        dim_prefix.push_back(bd.dim(i));
    BlockDims dims(std::move(dim_prefix), bd.tail_dim());

    std::vector<BlockSet> set_prefix{FullSet{}};
    for (std::size_t i = 0; i < tv.sets.prefix_size(); ++i)
        set_prefix.push_back(tv.sets.block(i));
    SetSpec sets(std::move(set_prefix), tv.sets.tail(), dims);

    NetworkSpec augmented(std::move(prefix), std::move(tail),
                          augment_gain(tv.gain, lambda0), std::move(sets),
                          tv.p, tv.q, false);
    return ClockAugmented{tv, std::move(augmented)};
}

UniformityReport ueiss_check(const ClockAugmented& aug, const Certificate& cert,
                             std::span<const double> t0_samples,
                             std::span<const TruncSeq> x0_samples,
                             const InputSignal& u,
                             const UniformityOptions& opts) {
    require(!t0_samples.empty(), "uniformity sweep needs initial times");
    require(!x0_samples.empty(), "uniformity sweep needs initial states");
    require(opts.T > 0.0, "uniformity horizon must be positive");

    UniformityReport rep;
    rep.M = opts.envelope_M < 0.0 ? cert.overshoot : opts.envelope_M;
    rep.a = opts.envelope_a < 0.0 ? cert.decay_rate : opts.envelope_a;
    const std::function<double(double)> gain = [&cert](double r) {
        return cert.iss_gain(r);
    };

    for (const double t0 : t0_samples) {
        for (std::size_t xi = 0; xi < x0_samples.size(); ++xi) {
            const TruncSeq& x0 = x0_samples[xi];
            require(x0.blocks() >= 1,
                    "initial states need at least one block");
            TruncatedSystem sys = truncate(aug.augmented, x0.blocks() + 1);
            std::vector<double> z0;
            z0.reserve(sys.layout().flat_dim());
            z0.push_back(t0);
            z0.insert(z0.end(), x0.flat().begin(), x0.flat().end());
            require(z0.size() == sys.layout().flat_dim(),
                    "initial state does not match the augmented layout");
            Trajectory traj = integrate(sys, z0, u, opts.T, opts.integrate);
            if (traj.overflow)
                throw NumericError(
                    "trajectory diverged during the uniformity sweep");
            EnvelopeReport env =
                check_eiss_envelope(traj, aug.augmented.sets, rep.M, rep.a,
                                    gain, u.sup_norm_q(), opts.tol);
            rep.worst_margin = std::min(rep.worst_margin, env.margins.worst);
            rep.pass = rep.pass && env.pass;
            rep.runs.push_back(UniformityRun{t0, xi, std::move(env)});
        }
    }
    return rep;
}

namespace {

// Undirected edge list with canonical (low, high) keys. A pair listed in
// both orientations must agree on the weight, and a pair already reachable
// through the band cannot be re-declared.
std::vector<ConsensusEdge> canonical_edges(const ConsensusSpec& cs) {
    std::set<std::size_t> band_offsets;
    for (const auto& [off, w] : cs.band) band_offsets.insert(off);
    std::map<std::pair<std::size_t, std::size_t>, double> seen;
    for (const ConsensusEdge& e : cs.edges) {
        require(e.i != e.j, "consensus edge endpoints must differ");
        require(std::isfinite(e.weight) && e.weight > 0.0,
                "consensus edge weights must be positive");
        const std::size_t lo = std::min(e.i, e.j);
        const std::size_t hi = std::max(e.i, e.j);
        require(!band_offsets.count(hi - lo),
                "consensus edge duplicates a banded coupling");
        auto [it, fresh] = seen.emplace(std::make_pair(lo, hi), e.weight);
        if (!fresh)
            require(it->second == e.weight,
                    "a consensus edge listed twice must keep one weight");
    }
    std::vector<ConsensusEdge> out;
    out.reserve(seen.size());
    for (const auto& [key, w] : seen) out.push_back({key.first, key.second, w});
    return out;
}

void validate_consensus(const ConsensusSpec& cs) {
    require(cs.n >= 1, "agent dimension must be positive");
    require(cs.B.rows() == cs.n && cs.B.cols() == cs.n && cs.B.allFinite(),
            "coupling input map must be a finite n x n matrix");
    require(std::isfinite(cs.sigma) && cs.sigma > 0.0,
            "coupling gain must be positive");
    require(std::isfinite(cs.lipschitz) && cs.lipschitz >= 0.0,
            "declared drift Lipschitz constant must be finite");

    require(cs.alpha.first == 0, "averaging weights must start at agent 0");
    require(cs.alpha.tail_ratio > 0.0 && cs.alpha.tail_ratio < 1.0,
            "averaging tail ratio must lie in (0,1)");
    for (double v : cs.alpha.prefix)
        require(std::isfinite(v) && v > 0.0,
                "averaging weights must be positive");
    require(std::isfinite(cs.alpha.tail_base) && cs.alpha.tail_base > 0.0,
            "averaging tail weight must be positive");
    require(std::abs(cs.alpha.total() - 1.0) <= 1e-12,
            "averaging weights must sum to 1");

    double w_sup = 0.0;
    std::set<std::size_t> offsets;
    for (const auto& [off, w] : cs.band) {
        require(off >= 1, "band offsets must be positive");
        require(offsets.insert(off).second, "duplicate band offset");
        require(std::isfinite(w) && w > 0.0,
                "band coupling weights must be positive");
        w_sup = std::max(w_sup, w);
    }
    for (const ConsensusEdge& e : cs.edges) w_sup = std::max(w_sup, e.weight);
    require(std::abs(w_sup - 1.0) <= 1e-12,
            "the largest coupling weight must be 1");

    for (const SumTerm& g : cs.agent_terms) {
        require(!g.sources.empty(), "agent drift terms need a source");
        for (const SourceRef& s : g.sources)
            require(s.kind == SourceRef::Kind::self,
                    "agent drift reads only the own state");
        require(g.coeff.c1 == 0.0 && !g.coeff.clock_block,
                "agent drift must be time-invariant");
        require(g.bias.size() == 0 || g.bias.norm() == 0.0,
                "agent drift must vanish at zero");
        require(g.phi != Phi::lookup,
                "lookup drift has no structural zero at the origin");
    }
}

// Combined self map of one drift term; agent drift reads only the own state,
// so the term argument is Pg x + bias.
Eigen::MatrixXd combined_pre(const SumTerm& g, int n) {
    const Eigen::Index z = g.post.cols();
    Eigen::MatrixXd Pg = Eigen::MatrixXd::Zero(z, n);
    for (const SourceRef& s : g.sources) {
        require(s.pre.rows() == z && s.pre.cols() == n,
                "agent drift source shape mismatch");
        Pg += s.pre;
    }
    return Pg;
}

// Structural neighbor weight sum c_i = sum_j a_ij alpha_j over the full
// (untruncated) neighborhood.
double coupling_weight_sum(const ConsensusSpec& cs,
                           const std::vector<ConsensusEdge>& edges,
                           std::size_t i) {
    double c = 0.0;
    for (const auto& [off, w] : cs.band) {
        c += w * cs.alpha.at(i + off);
        if (i >= off) c += w * cs.alpha.at(i - off);
    }
    for (const ConsensusEdge& e : edges) {
        if (e.i == i) c += e.weight * cs.alpha.at(e.j);
        if (e.j == i) c += e.weight * cs.alpha.at(e.i);
    }
    return c;
}

SubsystemSpec inert_tail(int n) {
    SubsystemSpec tail;
    tail.n = n;
    tail.m = 0;
    tail.lipschitz = 0.0;
    tail.V.kind = LocalLyapunov::Kind::distance_power;
    tail.V.scale = 1.0;
    return tail;
}

GainSpec neutral_gain() {
    return GainSpec({}, 1.0, {}, {}, {}, 1.0,
                    GainSpec::Bounds{1.0, 1.0, 1.0, 1.0, 1.0});
}

WeightRule shifted_alpha(const ConsensusSpec& cs) {
    WeightRule w = cs.alpha;
    w.first += 1;
    return w;
}

void require_edges_materialized(const std::vector<ConsensusEdge>& edges,
                                std::size_t n_agents) {
    for (const ConsensusEdge& e : edges)
        require(e.i < n_agents && e.j < n_agents,
                "consensus edges must lie within the materialized agents");
}

}  // namespace

NetworkSpec build_consensus_error_system(const ConsensusSpec& cs,
                                         std::size_t n_error_blocks) {
    validate_consensus(cs);
    require(n_error_blocks >= 1, "need at least one error block");
    const std::vector<ConsensusEdge> edges = canonical_edges(cs);
    require_edges_materialized(edges, n_error_blocks);

    const int n = cs.n;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd sB = cs.sigma * cs.B;
    const WeightRule shifted = shifted_alpha(cs);

    std::vector<SubsystemSpec> prefix;
    prefix.reserve(n_error_blocks + 1);

    // Block 0 carries the weighted average; its drift is the alpha-weighted
    // gather of the common drift over the reconstructed agent states. The
    // coupling contribution cancels by edge symmetry and does not appear.
    SubsystemSpec avg;
    avg.n = n;
    avg.m = 0;
    avg.lipschitz = cs.lipschitz;
    avg.V.kind = LocalLyapunov::Kind::distance_power;
    avg.V.scale = 1.0;
    for (const SumTerm& g : cs.agent_terms) {
        const Eigen::MatrixXd Pg = combined_pre(g, n);
        GatherTerm gt;
        gt.weights = shifted;
        gt.pre_gather = Pg;
        gt.pre_self = Pg;
        gt.bias = g.bias;
        gt.phi = g.phi;
        gt.sat_limit = g.sat_limit;
        gt.post = g.post;
        gt.coeff = g.coeff;
        avg.terms.push_back(std::move(gt));
    }
    prefix.push_back(std::move(avg));

    double band_degree = 0.0;
    for (const auto& [off, w] : cs.band) band_degree += 2.0 * w;

    for (std::size_t k = 1; k <= n_error_blocks; ++k) {
        const std::size_t i = k - 1;  // agent index
        const double a_i = cs.alpha.at(i);
        const double c_i = coupling_weight_sum(cs, edges, i);

        SubsystemSpec sub;
        sub.n = n;
        sub.m = 0;
        sub.V.kind = LocalLyapunov::Kind::distance_power;
        sub.V.scale = 1.0;

        for (const SumTerm& g : cs.agent_terms) {
            const Eigen::MatrixXd Pg = combined_pre(g, n);
            // alpha_i f at the reconstructed own state.
            SumTerm own;
            own.bias = g.bias;
            own.phi = g.phi;
            own.sat_limit = g.sat_limit;
            own.post = a_i * g.post;
            own.coeff = g.coeff;
            own.sources.push_back({SourceRef::Kind::self, 0, Pg / a_i});
            own.sources.push_back({SourceRef::Kind::abs_block, 0, Pg});
            sub.terms.push_back(std::move(own));
            // minus alpha_i times the average drift.
            GatherTerm gt;
            gt.weights = shifted;
            gt.pre_gather = Pg;
            gt.pre_self = Pg;
            gt.bias = g.bias;
            gt.phi = g.phi;
            gt.sat_limit = g.sat_limit;
            gt.post = -a_i * g.post;
            gt.coeff = g.coeff;
            gt.anchor = {SourceRef::Kind::abs_block, 0, Eigen::MatrixXd()};
            sub.terms.push_back(std::move(gt));
        }

        // Coupling in error coordinates:
        //   sigma B (alpha_i sum_j a_ij e_j - c_i e_i).
        SumTerm coup;
        coup.post = sB;
        coup.sources.push_back({SourceRef::Kind::self, 0, -c_i * I});
        for (const auto& [off, w] : cs.band) {
            coup.sources.push_back({SourceRef::Kind::rel_block,
                                    static_cast<long long>(off),
                                    a_i * w * I});
            if (k > off)
                coup.sources.push_back({SourceRef::Kind::rel_block,
                                        -static_cast<long long>(off),
                                        a_i * w * I});
        }
        for (const ConsensusEdge& e : edges) {
            if (e.i != i && e.j != i) continue;
            const std::size_t other = e.i == i ? e.j : e.i;
            coup.sources.push_back(
                {SourceRef::Kind::abs_block,
                 static_cast<long long>(other + 1), a_i * e.weight * I});
        }
        sub.terms.push_back(std::move(coup));

        sub.lipschitz = (1.0 + 2.0 * a_i) * cs.lipschitz +
                        cs.sigma * cs.B.norm() *
                            (c_i + a_i * (band_degree + 1.0));
        prefix.push_back(std::move(sub));
    }

    SetSpec sets({FullSet{}}, OriginSet{}, BlockDims::uniform(n));
    return NetworkSpec(std::move(prefix), inert_tail(n), neutral_gain(),
                       std::move(sets), 1.0, 1.0, false);
}

NetworkSpec build_consensus_original_system(const ConsensusSpec& cs,
                                            std::size_t n_agents) {
    validate_consensus(cs);
    require(n_agents >= 1, "need at least one agent");
    const std::vector<ConsensusEdge> edges = canonical_edges(cs);
    require_edges_materialized(edges, n_agents);

    const int n = cs.n;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd sB = cs.sigma * cs.B;

    double band_degree = 0.0;
    for (const auto& [off, w] : cs.band) band_degree += 2.0 * w;

    std::vector<SubsystemSpec> prefix;
    prefix.reserve(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i) {
        const double c_i = coupling_weight_sum(cs, edges, i);

        SubsystemSpec sub;
        sub.n = n;
        sub.m = 0;
        sub.V.kind = LocalLyapunov::Kind::distance_power;
        sub.V.scale = 1.0;
        for (const SumTerm& g : cs.agent_terms) sub.terms.push_back(g);

        // sigma B sum_j alpha_j a_ij (x_j - x_i); each read carries the
        // neighbor's averaging weight.
        SumTerm coup;
        coup.post = sB;
        coup.sources.push_back({SourceRef::Kind::self, 0, -c_i * I});
        for (const auto& [off, w] : cs.band) {
            coup.sources.push_back({SourceRef::Kind::rel_block,
                                    static_cast<long long>(off),
                                    cs.alpha.at(i + off) * w * I});
            if (i >= off)
                coup.sources.push_back({SourceRef::Kind::rel_block,
                                        -static_cast<long long>(off),
                                        cs.alpha.at(i - off) * w * I});
        }
        for (const ConsensusEdge& e : edges) {
            if (e.i != i && e.j != i) continue;
            const std::size_t other = e.i == i ? e.j : e.i;
            coup.sources.push_back({SourceRef::Kind::abs_block,
                                    static_cast<long long>(other),
                                    cs.alpha.at(other) * e.weight * I});
        }
        sub.terms.push_back(std::move(coup));

        sub.lipschitz = cs.lipschitz +
                        cs.sigma * cs.B.norm() * (c_i + band_degree + 1.0);
        prefix.push_back(std::move(sub));
    }

    return NetworkSpec(std::move(prefix), inert_tail(n), neutral_gain(),
                       SetSpec::origin(BlockDims::uniform(n)), 1.0, 1.0,
                       false);
}

TruncSeq consensus_error_initial(const ConsensusSpec& cs, const TruncSeq& x0,
                                 std::size_t n_error_blocks) {
    validate_consensus(cs);
    require(n_error_blocks >= 1, "need at least one error block");
    for (std::size_t i = 0; i < x0.blocks(); ++i)
        require(x0.layout().dim(i) == cs.n,
                "initial state blocks must have the agent dimension");

    Eigen::VectorXd xa = Eigen::VectorXd::Zero(cs.n);
    for (std::size_t i = 0; i < x0.blocks(); ++i) {
        const std::span<const double> b = x0.block(i);
        for (int c = 0; c < cs.n; ++c)
            xa[c] += cs.alpha.at(i) * b[static_cast<std::size_t>(c)];
    }

    auto layout = std::make_shared<BlockLayout>(BlockDims::uniform(cs.n),
                                               n_error_blocks + 1);
    std::vector<double> flat(layout->flat_dim(), 0.0);
    for (int c = 0; c < cs.n; ++c) flat[static_cast<std::size_t>(c)] = xa[c];
    for (std::size_t k = 1; k <= n_error_blocks; ++k) {
        const std::size_t i = k - 1;
        const double a_i = cs.alpha.at(i);
        const std::size_t off = layout->offset(k);
        for (int c = 0; c < cs.n; ++c) {
            const double xic =
                i < x0.blocks() ? x0.block(i)[static_cast<std::size_t>(c)]
                                : 0.0;
            flat[off + static_cast<std::size_t>(c)] = a_i * (xic - xa[c]);
        }
    }
    return TruncSeq(std::move(layout), 1.0, std::move(flat));
}

namespace {

Eigen::VectorXd weighted_average(const ConsensusSpec& cs,
                                 const BlockLayout& layout,
                                 std::span<const double> flat) {
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(cs.n);
    for (std::size_t i = 0; i < layout.blocks(); ++i) {
        const std::span<const double> b = layout.block(flat, i);
        for (int c = 0; c < cs.n; ++c)
            avg[c] += cs.alpha.at(i) * b[static_cast<std::size_t>(c)];
    }
    return avg;
}

}  // namespace

double consensus_conservation_drift(const Trajectory& original,
                                    const ConsensusSpec& cs) {
    validate_consensus(cs);
    require(original.samples() >= 1, "conservation check needs samples");
    const BlockLayout& L = *original.layout;
    for (std::size_t i = 0; i < L.blocks(); ++i)
        require(L.dim(i) == cs.n,
                "trajectory blocks must have the agent dimension");

    const Eigen::VectorXd avg0 = weighted_average(cs, L, original.state(0));
    double worst = 0.0;
    for (std::size_t k = 1; k < original.samples(); ++k) {
        const Eigen::VectorXd avg =
            weighted_average(cs, L, original.state(k));
        worst = std::max(worst, (avg - avg0).norm());
    }
    return worst;
}

double consensus_coordinate_gap(const Trajectory& original,
                                const Trajectory& errors,
                                const ConsensusSpec& cs) {
    validate_consensus(cs);
    require(original.samples() == errors.samples() &&
                original.samples() >= 1,
            "coordinate comparison needs matching sample grids");
    const BlockLayout& Lo = *original.layout;
    const BlockLayout& Le = *errors.layout;
    require(Le.blocks() >= 1, "error trajectory misses the average block");
    for (std::size_t i = 0; i < Lo.blocks(); ++i)
        require(Lo.dim(i) == cs.n, "original block dimension mismatch");
    for (std::size_t i = 0; i < Le.blocks(); ++i)
        require(Le.dim(i) == cs.n, "error block dimension mismatch");

    const std::size_t n_cmp = std::min(Lo.blocks(), Le.blocks() - 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < original.samples(); ++k) {
        require(std::abs(original.times[k] - errors.times[k]) <= 1e-9,
                "coordinate comparison needs a shared time grid");
        const std::span<const double> xo = original.state(k);
        const std::span<const double> xe = errors.state(k);
        const Eigen::VectorXd avg = weighted_average(cs, Lo, xo);
        const std::span<const double> b0 = Le.block(xe, 0);
        for (int c = 0; c < cs.n; ++c)
            worst = std::max(
                worst, std::abs(b0[static_cast<std::size_t>(c)] - avg[c]));
        for (std::size_t i = 0; i < n_cmp; ++i) {
            const double a_i = cs.alpha.at(i);
            const std::span<const double> xi = Lo.block(xo, i);
            const std::span<const double> ei = Le.block(xe, i + 1);
            for (int c = 0; c < cs.n; ++c) {
                const auto cc = static_cast<std::size_t>(c);
                const double pred = a_i * (xi[cc] - avg[c]);
                worst = std::max(worst, std::abs(ei[cc] - pred));
            }
        }
    }
    return worst;
}

ConsensusReport consensus_metrics(const Trajectory& traj,
                                  const ConsensusSpec& cs,
                                  const ConsensusOptions& opts) {
    validate_consensus(cs);
    require(opts.n_modes >= 1, "mode table needs at least one entry");
    const BlockLayout& L = *traj.layout;
    require(L.blocks() >= 2,
            "error trajectory needs the average block and one agent");
    require(traj.samples() >= 2, "decay metrics need at least two samples");
    for (std::size_t i = 0; i < L.blocks(); ++i)
        require(L.dim(i) == cs.n, "error block dimension mismatch");

    const std::size_t n_err = L.blocks() - 1;
    const std::size_t n_modes = std::min(opts.n_modes, n_err);
    const std::size_t K = traj.samples();
    const double t0 = traj.times.front();

    std::vector<double> e1(K, 0.0);
    std::vector<std::vector<double>> mode_dist(n_modes,
                                               std::vector<double>(K, 0.0));
    for (std::size_t k = 0; k < K; ++k) {
        const std::span<const double> s = traj.state(k);
        double acc = 0.0;
        for (std::size_t i = 1; i <= n_err; ++i) {
            const std::span<const double> b = L.block(s, i);
            double sq = 0.0;
            for (double v : b) sq += v * v;
            const double bn = std::sqrt(sq);
            acc += bn;
            if (i - 1 < n_modes) mode_dist[i - 1][k] = bn / cs.alpha.at(i - 1);
        }
        e1[k] = acc;
    }

    ConsensusReport rep;
    rep.alpha_min = cs.alpha.min_over(n_modes);
    if (*std::min_element(e1.begin(), e1.end()) > 0.0) {
        rep.fit = fit_decay(traj.times, e1, 0, K);
        rep.fit_valid = true;
    }

    const double E0 = e1.front();
    rep.a = opts.a < 0.0 ? (rep.fit_valid ? rep.fit.a : 0.0) : opts.a;
    if (opts.M < 0.0) {
        // Tightest constant that majorizes the observed series at rate a,
        // inflated by one part in 1e12 so the defining sample stays inside.
        double M = 1.0;
        if (E0 > 0.0)
            for (std::size_t k = 0; k < K; ++k)
                M = std::max(
                    M, e1[k] * std::exp(rep.a * (traj.times[k] - t0)) / E0);
        rep.M = M * (1.0 + 1e-12);
    } else {
        rep.M = opts.M;
    }

    rep.l1_envelope.check = "consensus_l1_envelope";
    rep.l1_envelope.tol = opts.tol;
    rep.scaled_sum.check = "consensus_scaled_sum";
    rep.scaled_sum.tol = opts.tol;
    for (std::size_t k = 0; k < K; ++k) {
        const double env =
            rep.M * std::exp(-rep.a * (traj.times[k] - t0)) * E0;
        rep.l1_envelope.add(traj.times[k], env - e1[k]);
        double ssum = 0.0;
        for (std::size_t m = 0; m < n_modes; ++m) ssum += mode_dist[m][k];
        rep.scaled_sum.add(traj.times[k], env / rep.alpha_min - ssum);
    }

    bool modes_pass = true;
    for (std::size_t m = 0; m < n_modes; ++m) {
        ModeBound mb;
        mb.mode = m;
        mb.alpha = cs.alpha.at(m);
        mb.worst_margin = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const double bound = rep.M *
                                 std::exp(-rep.a * (traj.times[k] - t0)) *
                                 E0 / mb.alpha;
            mb.peak = std::max(mb.peak, mode_dist[m][k]);
            mb.worst_margin =
                std::min(mb.worst_margin, bound - mode_dist[m][k]);
        }
        modes_pass = modes_pass && mb.worst_margin >= -opts.tol;
        rep.modes.push_back(mb);
    }

    rep.pass = rep.l1_envelope.pass && rep.scaled_sum.pass && modes_pass;
    return rep;
}

NetworkSpec build_observer_composite(const ObserverSpec& os) {
    require(os.n >= 1, "plant dimension must be positive");
    require(os.m_y >= 1, "output dimension must be positive");
    require(os.A.rows() == os.n && os.A.cols() == os.n && os.A.allFinite(),
            "plant map must be a finite n x n matrix");
    require(os.C.rows() == os.m_y && os.C.cols() == os.n && os.C.allFinite(),
            "output map must be m_y x n");
    require(os.K.rows() == os.n && os.K.cols() == os.m_y && os.K.allFinite(),
            "correction gain must map measured outputs into the state");

    const int n = os.n;
    const int n2 = 2 * n;
    const Eigen::MatrixXd KC = os.K * os.C;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n2, n2);
    S.topLeftCorner(n, n) = os.A;
    S.bottomLeftCorner(n, n) = KC;
    S.bottomRightCorner(n, n) = os.A - KC;

    SumTerm dyn;
    dyn.post = Eigen::MatrixXd::Identity(n2, n2);
    dyn.sources.push_back({SourceRef::Kind::self, 0, S});
    double lip = S.norm();
    std::set<int> seen;
    for (const auto& [off, Mk] : os.coupling) {
        require(off != 0, "coupling offsets must be nonzero");
        require(seen.insert(off).second, "duplicate coupling offset");
        require(Mk.rows() == n && Mk.cols() == n && Mk.allFinite(),
                "coupling maps must be finite n x n matrices");
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n2, n2);
        D.topLeftCorner(n, n) = Mk;
        D.bottomRightCorner(n, n) = Mk;
        dyn.sources.push_back({SourceRef::Kind::rel_block, off, D});
        lip += D.norm();
    }

    SubsystemSpec sub;
    sub.n = n2;
    sub.m = 0;
    sub.terms.push_back(std::move(dyn));
    sub.lipschitz = lip;
    sub.V.kind = LocalLyapunov::Kind::quadratic_form;
    Eigen::MatrixXd P(n2, n2);
    P.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    P.topRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
    P.bottomLeftCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
    P.bottomRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    sub.V.P = P;
    // V = |x - xhat|^2 and the diagonal distance is |x - xhat| / sqrt(2),
    // so V sits at exactly twice the squared block distance.
    sub.V.alpha_lo = 2.0;
    sub.V.alpha_hi = 2.0;

    SetSpec sets({}, DiagonalSet{}, BlockDims::uniform(n2));
    return NetworkSpec({}, std::move(sub), os.gain, std::move(sets), 2.0,
                       2.0, false);
}

ObserverReport observer_error_decay(const Trajectory& traj,
                                    const ObserverSpec& os,
                                    const Certificate& cert, double tol) {
    require(traj.samples() >= 2, "error decay needs at least two samples");
    const BlockLayout& L = *traj.layout;
    const int n = os.n;
    for (std::size_t i = 0; i < L.blocks(); ++i)
        require(L.dim(i) == 2 * n,
                "trajectory blocks must pair plant and observer states");

    const std::size_t N = L.blocks();
    auto half = std::make_shared<BlockLayout>(BlockDims::uniform(n), N);

    ObserverReport rep;
    rep.times = traj.times;
    rep.error.reserve(traj.samples());
    std::vector<double> xs(half->flat_dim()), ys(half->flat_dim()), per(N);
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        const std::span<const double> z = traj.state(k);
        for (std::size_t i = 0; i < N; ++i) {
            const std::span<const double> zi = L.block(z, i);
            const std::size_t off = half->offset(i);
            double sq = 0.0;
            for (int c = 0; c < n; ++c) {
                const auto cc = static_cast<std::size_t>(c);
                const double d = zi[cc] - zi[cc + static_cast<std::size_t>(n)];
                sq += d * d;
                xs[off + cc] = zi[cc];
                ys[off + cc] = zi[cc + static_cast<std::size_t>(n)];
            }
            per[i] = std::sqrt(sq);
        }
        const double direct = aggregate_lp(per, traj.p);
        const double via =
            std::sqrt(2.0) * pair_dist_to_diagonal(*half, xs, ys, traj.p);
        rep.identity_worst =
            std::max(rep.identity_worst, std::abs(direct - via));
        rep.error.push_back(direct);
    }

    SetSpec diagonal({}, DiagonalSet{}, BlockDims::uniform(2 * n));
    rep.envelope = check_eiss_envelope(
        traj, diagonal, cert.overshoot, cert.decay_rate,
        [](double) { return 0.0; }, 0.0, tol);

    const double e0 = rep.error.front();
    const double peak = *std::max_element(rep.error.begin(), rep.error.end());
    if (peak <= 1e-10 * (1.0 + e0))
        rep.verdict = ObserverVerdict::yes;
    else if (rep.envelope.pass && rep.envelope.fit_valid &&
             rep.envelope.fit.a > 0.0)
        rep.verdict = ObserverVerdict::yes;
    else if (rep.envelope.fit_valid && rep.envelope.fit.a < 0.0)
        rep.verdict = ObserverVerdict::no;
    else
        rep.verdict = ObserverVerdict::inconclusive;
    return rep;
}

}  // namespace smallgain