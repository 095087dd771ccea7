#include "smallgain/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smallgain {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double apply_phi(Phi phi, double v, double sat_limit,
                 const std::vector<std::pair<double, double>>& table) {
    switch (phi) {
        case Phi::identity:
            return v;
        case Phi::saturation:
            return std::clamp(v, -sat_limit, sat_limit);
        case Phi::sine:
            return std::sin(v);
        case Phi::cubic:
            return v * v * v;
        case Phi::lookup: {
            // Piecewise-linear interpolation, clamped at both ends.
            if (v <= table.front().first) return table.front().second;
            if (v >= table.back().first) return table.back().second;
            auto it = std::upper_bound(
                table.begin(), table.end(), v,
                [](double a, const std::pair<double, double>& b) {
                    return a < b.first;
                });
            const auto& [x1, y1] = *it;
            const auto& [x0, y0] = *(it - 1);
            return y0 + (y1 - y0) * (v - x0) / (x1 - x0);
        }
    }
    return v;
}

void validate_term_shapes(const SubsystemSpec& sub, const Term& term,
                          int self_dim, int input_dim, const BlockDims& dims) {
    if (const auto* st = std::get_if<SumTerm>(&term)) {
        require(st->post.rows() == self_dim,
                "term output dimension does not match the subsystem state");
        const auto z = st->post.cols();
        require(z >= 1, "term argument space must be nonempty");
        require(st->bias.size() == 0 || st->bias.size() == z,
                "term bias dimension mismatch");
        for (const auto& src : st->sources) {
            require(src.pre.rows() == z, "source map rows mismatch");
            if (src.kind == SourceRef::Kind::self)
                require(src.pre.cols() == self_dim, "self source width mismatch");
            if (src.kind == SourceRef::Kind::input)
                require(src.pre.cols() == input_dim,
                        "input source width mismatch");
            require(src.pre.allFinite(), "source map must be finite");
        }
        require(st->post.allFinite(), "term output map must be finite");
        if (st->phi == Phi::lookup) {
            require(st->table.size() >= 2, "lookup table needs two points");
            for (std::size_t k = 1; k < st->table.size(); ++k)
                require(st->table[k].first > st->table[k - 1].first,
                        "lookup breakpoints must increase strictly");
        }
        if (st->phi == Phi::saturation)
            require(st->sat_limit > 0.0, "saturation limit must be positive");
    } else {
        const auto& gt = std::get<GatherTerm>(term);
        require(gt.post.rows() == self_dim,
                "gather output dimension does not match the subsystem state");
        const auto z = gt.post.cols();
        require(gt.pre_gather.rows() == z && gt.pre_self.rows() == z,
                "gather argument rows mismatch");
        require(gt.anchor.kind == SourceRef::Kind::self ||
                    gt.anchor.kind == SourceRef::Kind::abs_block,
                "gather anchor must be the owner or an absolute block");
        int anchor_dim = self_dim;
        if (gt.anchor.kind == SourceRef::Kind::abs_block) {
            require(gt.anchor.index >= 0, "gather anchor block id negative");
            anchor_dim = dims.dim(static_cast<std::size_t>(gt.anchor.index));
        }
        require(gt.pre_self.cols() == anchor_dim,
                "gather anchor width mismatch");
        require(gt.bias.size() == 0 || gt.bias.size() == z,
                "gather bias dimension mismatch");
        require(gt.weights.tail_ratio > 0.0 && gt.weights.tail_ratio < 1.0,
                "gather weight ratio must lie in (0,1)");
        for (double wv : gt.weights.prefix)
            require(std::isfinite(wv) && wv > 0.0,
                    "gather weights must be positive");
        require(gt.weights.tail_base >= 0.0, "gather tail weight negative");
        require(gt.phi != Phi::lookup, "gather terms do not take lookups");
    }
    (void)sub;
}

// Evaluates one subsystem right-hand side. Reader returns the block state for
// an absolute block id, or an empty span outside the truncation (read as 0).
template <typename Reader>
void eval_subsystem(const NetworkSpec& net, std::size_t i, double t,
                    std::span<const double> self, Reader&& read,
                    std::span<const double> u_i, std::span<double> out) {
    thread_local std::vector<double> arg, val;
    const SubsystemSpec& sub = net.subsystem(i);
    std::fill(out.begin(), out.end(), 0.0);

    auto accumulate_source = [&](const Eigen::MatrixXd& pre,
                                 std::span<const double> src) {
        if (src.empty()) return;  // zero-boundary read
        require(static_cast<std::size_t>(pre.cols()) == src.size(),
                "neighbor dimension mismatch under the structural tail");
        for (Eigen::Index r = 0; r < pre.rows(); ++r) {
            double acc = 0.0;
            for (Eigen::Index c = 0; c < pre.cols(); ++c)
                acc += pre(r, c) * src[static_cast<std::size_t>(c)];
            arg[static_cast<std::size_t>(r)] += acc;
        }
    };

    auto coeff_time = [&](const TimeCoeff& tc) -> double {
        if (!tc.clock_block || tc.c1 == 0.0) return t;
        const std::span<const double> y = read(*tc.clock_block);
        require(!y.empty(), "clock block outside the truncation");
        return y[0];
    };

    for (const Term& term : sub.terms) {
        if (const auto* st = std::get_if<SumTerm>(&term)) {
            const double c = st->coeff(coeff_time(st->coeff));
            if (c == 0.0) continue;
            const auto z = static_cast<std::size_t>(st->post.cols());
            arg.assign(z, 0.0);
            if (st->bias.size() > 0)
                for (std::size_t r = 0; r < z; ++r) arg[r] = st->bias[r];
            for (const auto& src : st->sources) {
                switch (src.kind) {
                    case SourceRef::Kind::self:
                        accumulate_source(src.pre, self);
                        break;
                    case SourceRef::Kind::input:
                        accumulate_source(src.pre, u_i);
                        break;
                    case SourceRef::Kind::rel_block: {
                        const long long j =
                            static_cast<long long>(i) + src.index;
                        accumulate_source(
                            src.pre,
                            j < 0 ? std::span<const double>{}
                                  : read(static_cast<std::size_t>(j)));
                        break;
                    }
                    case SourceRef::Kind::abs_block:
                        accumulate_source(
                            src.pre, read(static_cast<std::size_t>(src.index)));
                        break;
                }
            }
            val.assign(z, 0.0);
            for (std::size_t r = 0; r < z; ++r)
                val[r] = apply_phi(st->phi, arg[r], st->sat_limit, st->table);
            for (std::size_t r = 0; r < out.size(); ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < z; ++k)
                    acc += st->post(static_cast<Eigen::Index>(r),
                                    static_cast<Eigen::Index>(k)) *
                           val[k];
                out[r] += c * acc;
            }
        } else {
            const auto& gt = std::get<GatherTerm>(term);
            const double c = gt.coeff(coeff_time(gt.coeff));
            if (c == 0.0) continue;
            const auto z = static_cast<std::size_t>(gt.post.cols());
            std::span<const double> anchor = self;
            if (gt.anchor.kind == SourceRef::Kind::abs_block)
                anchor = read(static_cast<std::size_t>(gt.anchor.index));
            for (std::size_t j = gt.weights.first;; ++j) {
                const std::span<const double> xj = read(j);
                if (xj.empty()) break;  // past the truncation
                const double w = gt.weights.at(j);
                if (w <= 0.0) continue;
                arg.assign(z, 0.0);
                if (gt.bias.size() > 0)
                    for (std::size_t r = 0; r < z; ++r) arg[r] = gt.bias[r];
                accumulate_source(gt.pre_self, anchor);
                require(static_cast<std::size_t>(gt.pre_gather.cols()) ==
                            xj.size(),
                        "gather block dimension mismatch");
                for (Eigen::Index r = 0; r < gt.pre_gather.rows(); ++r) {
                    double acc = 0.0;
                    for (Eigen::Index cc = 0; cc < gt.pre_gather.cols(); ++cc)
                        acc += gt.pre_gather(r, cc) *
                               xj[static_cast<std::size_t>(cc)];
                    arg[static_cast<std::size_t>(r)] += acc / w;
                }
                for (std::size_t r = 0; r < out.size(); ++r) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < z; ++k)
                        acc += gt.post(static_cast<Eigen::Index>(r),
                                       static_cast<Eigen::Index>(k)) *
                               apply_phi(gt.phi, arg[k], gt.sat_limit, {});
                    out[r] += c * w * acc;
                }
            }
        }
    }
}

}  // namespace

double WeightRule::at(std::size_t block) const {
    if (block < first) return 0.0;
    const std::size_t idx = block - first;
    if (idx < prefix.size()) return prefix[idx];
    return tail_base * std::pow(tail_ratio, static_cast<double>(idx - prefix.size()));
}

double WeightRule::partial_sum(std::size_t n) const {
    if (n <= first) return 0.0;
    const std::size_t count = n - first;
    double acc = 0.0;
    const std::size_t np = std::min(count, prefix.size());
    for (std::size_t k = 0; k < np; ++k) acc += prefix[k];
    if (count > prefix.size()) {
        const auto m = static_cast<double>(count - prefix.size());
        acc += tail_base * (1.0 - std::pow(tail_ratio, m)) / (1.0 - tail_ratio);
    }
    return acc;
}

double WeightRule::total() const {
    double acc = 0.0;
    for (double v : prefix) acc += v;
    return acc + tail_base / (1.0 - tail_ratio);
}

double WeightRule::min_over(std::size_t n) const {
    require(n > first, "weight window is empty");
    double m = kInf;
    const std::size_t count = n - first;
    const std::size_t np = std::min(count, prefix.size());
    for (std::size_t k = 0; k < np; ++k) m = std::min(m, prefix[k]);
    if (count > prefix.size() && tail_base > 0.0) {
        const auto last = static_cast<double>(count - prefix.size() - 1);
        m = std::min(m, tail_base * std::pow(tail_ratio, last));
    }
    return m;
}

NetworkSpec::NetworkSpec(std::vector<SubsystemSpec> prefix_,
                         SubsystemSpec tail_, GainSpec gain_, SetSpec sets_,
                         double p_, double q_, bool time_varying_)
    : prefix(std::move(prefix_)),
      tail(std::move(tail_)),
      gain(std::move(gain_)),
      sets(std::move(sets_)),
      p(p_),
      q(q_),
      time_varying(time_varying_) {
    validate_exponent(p);
    validate_exponent(q);
    const BlockDims& dims = sets.dims();
    auto check_sub = [&](const SubsystemSpec& s, int block_dim) {
        require(s.n >= 1 && s.m >= 0, "subsystem dimensions invalid");
        require(s.n == block_dim,
                "subsystem state dimension disagrees with the block layout");
        require(std::isfinite(s.lipschitz) && s.lipschitz >= 0.0,
                "declared Lipschitz constant must be finite");
        require(s.V.alpha_lo > 0.0 && s.V.alpha_hi >= s.V.alpha_lo,
                "local coercivity bounds invalid");
        if (s.V.kind == LocalLyapunov::Kind::quadratic_form) {
            require(s.V.P.rows() == s.n && s.V.P.cols() == s.n,
                    "quadratic form dimension mismatch");
            require(s.V.P.allFinite(), "quadratic form must be finite");
        } else {
            require(std::isfinite(s.V.scale) && s.V.scale > 0.0,
                    "distance-power scale must be positive");
        }
        for (const Term& t : s.terms)
            validate_term_shapes(s, t, s.n, s.m, dims);
    };
    for (std::size_t i = 0; i < prefix.size(); ++i)
        check_sub(prefix[i], dims.dim(i));
    check_sub(tail, dims.dim(std::max(prefix.size(), dims.prefix_size())));

    if (time_varying) {
        // The clock reduction requires a fixed point at the origin for all t.
        std::vector<double> zero_state(16, 0.0);
        std::vector<double> zero_u(16, 0.0);
        std::vector<double> out(16, 0.0);
        auto zero_read = [&](std::size_t) {
            return std::span<const double>(zero_state.data(), 0);
        };
        const std::size_t probe_blocks = prefix.size() + 2;
        for (double t : {0.0, 0.7, 2.9}) {
            for (std::size_t i = 0; i < probe_blocks; ++i) {
                const SubsystemSpec& s = subsystem(i);
                std::span<double> o(out.data(), static_cast<std::size_t>(s.n));
                eval_subsystem(*this, i, t,
                               std::span<const double>(zero_state.data(),
                                                       static_cast<std::size_t>(s.n)),
                               zero_read,
                               std::span<const double>(zero_u.data(),
                                                       static_cast<std::size_t>(s.m)),
                               o);
                for (double v : o)
                    require(std::abs(v) <= 1e-12,
                            "time-varying dynamics must vanish at the origin");
            }
        }
    }
}

InputSignal InputSignal::zero() { return InputSignal{}; }

namespace {

void check_constant(const InputSignal::Constant& c) {
    for (const auto& v : c.prefix)
        require(v.allFinite(), "input values must be finite");
    if (c.tail.size() > 0) {
        require(c.tail.allFinite(), "input tail must be finite");
        require(c.tail.norm() == 0.0,
                "input tails must vanish so the signal stays in the input space");
    }
}

double constant_sup_q(const InputSignal::Constant& c, double q) {
    std::vector<double> norms;
    norms.reserve(c.prefix.size());
    for (const auto& v : c.prefix) norms.push_back(v.norm());
    return aggregate_lp(norms, q);
}

}  // namespace

InputSignal InputSignal::constant(Constant value, double q) {
    validate_exponent(q);
    check_constant(value);
    InputSignal s;
    s.kind_ = Kind::constant;
    s.q_sup_ = constant_sup_q(value, q);
    s.constant_ = std::move(value);
    return s;
}

InputSignal InputSignal::piecewise(std::vector<Piece> pieces, double q) {
    validate_exponent(q);
    require(!pieces.empty(), "piecewise signal needs at least one piece");
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        check_constant(pieces[k].value);
        require(std::isfinite(pieces[k].from), "piece start must be finite");
        require(k == 0 || pieces[k].from > pieces[k - 1].from,
                "piece starts must increase strictly");
    }
    InputSignal s;
    s.kind_ = Kind::piecewise;
    for (const auto& pc : pieces)
        s.q_sup_ = std::max(s.q_sup_, constant_sup_q(pc.value, q));
    s.pieces_ = std::move(pieces);
    return s;
}

InputSignal InputSignal::sinusoid(Sinusoid sin_spec, double q) {
    validate_exponent(q);
    check_constant(sin_spec.amplitude);
    require(std::isfinite(sin_spec.omega) && std::isfinite(sin_spec.phase),
            "sinusoid parameters must be finite");
    InputSignal s;
    s.kind_ = Kind::sinusoid;
    s.q_sup_ = constant_sup_q(sin_spec.amplitude, q);
    s.sin_ = std::move(sin_spec);
    return s;
}

Eigen::VectorXd InputSignal::block(std::size_t i, double t) const {
    switch (kind_) {
        case Kind::zero:
            return Eigen::VectorXd();
        case Kind::constant:
            return i < constant_.prefix.size() ? constant_.prefix[i]
                                               : Eigen::VectorXd();
        case Kind::piecewise: {
            const Constant* active = nullptr;
            for (const auto& pc : pieces_) {
                if (pc.from <= t) active = &pc.value;
                else break;
            }
            if (active == nullptr || i >= active->prefix.size())
                return Eigen::VectorXd();
            return active->prefix[i];
        }
        case Kind::sinusoid: {
            if (i >= sin_.amplitude.prefix.size()) return Eigen::VectorXd();
            return sin_.amplitude.prefix[i] *
                   std::sin(sin_.omega * t + sin_.phase);
        }
    }
    return Eigen::VectorXd();
}

void InputSignal::block_into(std::size_t i, double t,
                             std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (kind_ == Kind::zero) return;
    const Eigen::VectorXd v = block(i, t);
    const std::size_t n = std::min(out.size(), static_cast<std::size_t>(v.size()));
    for (std::size_t k = 0; k < n; ++k) out[k] = v[static_cast<Eigen::Index>(k)];
}

TruncatedSystem::TruncatedSystem(const NetworkSpec& net, std::size_t n)
    : net_(&net), n_(n) {
    require(n >= 1, "truncation needs at least one block");
    require(n >= net.prefix.size(),
            "truncation must cover the explicit subsystem prefix");
    layout_ = std::make_shared<BlockLayout>(net.sets.dims(), n);
    std::size_t max_m = 0;
    for (std::size_t i = 0; i < n; ++i)
        max_m = std::max(max_m,
                         static_cast<std::size_t>(net.subsystem(i).m));
    scratch_.assign(std::max<std::size_t>(max_m, 1), 0.0);
}

void TruncatedSystem::rhs(double t, std::span<const double> x,
                          const InputSignal& u, std::span<double> dx) const {
    require(x.size() == layout_->flat_dim() && dx.size() == x.size(),
            "state dimension mismatch");
    auto read = [&](std::size_t j) -> std::span<const double> {
        if (j >= n_) return {};
        return x.subspan(layout_->offset(j),
                         static_cast<std::size_t>(layout_->dim(j)));
    };
    for (std::size_t i = 0; i < n_; ++i) {
        const SubsystemSpec& sub = net_->subsystem(i);
        std::span<double> u_buf(scratch_.data(),
                                static_cast<std::size_t>(sub.m));
        if (sub.m > 0) u.block_into(i, t, u_buf);
        eval_subsystem(*net_, i, t, read(i), read,
                       std::span<const double>(u_buf.data(), u_buf.size()),
                       dx.subspan(layout_->offset(i),
                                  static_cast<std::size_t>(layout_->dim(i))));
    }
}

TruncatedSystem truncate(const NetworkSpec& net, std::size_t n) {
    return TruncatedSystem(net, n);
}

TruncSeq Trajectory::seq(std::size_t k) const {
    auto sp = state(k);
    return TruncSeq(layout, p, std::vector<double>(sp.begin(), sp.end()));
}

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double sup_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// One classical fourth-order step from (t, x) into y; k1..k4 are scratch.
void rk4_step(const TruncatedSystem& sys, double t, double dt,
              std::span<const double> x, const InputSignal& u,
              std::vector<double>& k1, std::vector<double>& k2,
              std::vector<double>& k3, std::vector<double>& k4,
              std::vector<double>& tmp, std::span<double> y) {
    const std::size_t d = x.size();
    sys.rhs(t, x, u, k1);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    sys.rhs(t + 0.5 * dt, tmp, u, k2);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    sys.rhs(t + 0.5 * dt, tmp, u, k3);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + dt * k3[i];
    sys.rhs(t + dt, tmp, u, k4);
    for (std::size_t i = 0; i < d; ++i)
        y[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace

Trajectory integrate(const TruncatedSystem& sys, std::span<const double> x0,
                     const InputSignal& u, double T,
                     const IntegrateOptions& opts) {
    require(opts.dt > 0.0 && std::isfinite(opts.dt), "step size must be positive");
    require(T > 0.0 && std::isfinite(T), "horizon must be positive");
    const std::size_t d = sys.layout().flat_dim();
    require(x0.size() == d, "initial state dimension mismatch");
    require(all_finite(x0), "initial state must be finite");

    const auto steps = static_cast<std::size_t>(std::llround(T / opts.dt));
    require(steps >= 1, "horizon shorter than one step");

    Trajectory traj;
    traj.layout = std::make_shared<BlockLayout>(sys.layout());
    traj.dt = opts.dt;
    traj.p = sys.net().p;
    traj.times.reserve(steps + 1);
    traj.flat.reserve((steps + 1) * d);

    std::vector<double> x(x0.begin(), x0.end()), y(d), k1(d), k2(d), k3(d),
        k4(d), tmp(d), half(d), half2(d);

    traj.times.push_back(opts.t0);
    traj.flat.insert(traj.flat.end(), x.begin(), x.end());

    for (std::size_t k = 0; k < steps; ++k) {
        const double t = opts.t0 + static_cast<double>(k) * opts.dt;
        rk4_step(sys, t, opts.dt, x, u, k1, k2, k3, k4, tmp, y);

        if (opts.defect_every > 0 && (k + 1) % opts.defect_every == 0) {
            rk4_step(sys, t, 0.5 * opts.dt, x, u, k1, k2, k3, k4, tmp, half);
            rk4_step(sys, t + 0.5 * opts.dt, 0.5 * opts.dt, half, u, k1, k2, k3,
                     k4, tmp, half2);
            double ssq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double e = y[i] - half2[i];
                ssq += e * e;
            }
            const double defect = std::sqrt(ssq);
            traj.max_defect = std::max(traj.max_defect, defect);
            if (defect > opts.defect_warn)
                traj.defect_warnings.emplace_back(t, defect);
        }

        if (!all_finite(y)) {
            traj.overflow = true;
            break;
        }
        x.swap(y);
        traj.times.push_back(opts.t0 + static_cast<double>(k + 1) * opts.dt);
        traj.flat.insert(traj.flat.end(), x.begin(), x.end());
        if (sup_abs(x) > opts.overflow_limit) {
            traj.overflow = true;
            break;
        }
    }
    return traj;
}

ProbeReport truncation_probe(const NetworkSpec& net, std::size_t n,
                             std::size_t factor, std::span<const double> x0,
                             const InputSignal& u, double T,
                             const IntegrateOptions& opts) {
    require(factor >= 2, "probe factor must be at least 2");
    TruncatedSystem small = truncate(net, n);
    TruncatedSystem large = truncate(net, factor * n);
    require(x0.size() == small.layout().flat_dim(),
            "probe initial state must live in the small truncation");

    std::vector<double> x0_large(large.layout().flat_dim(), 0.0);
    std::copy(x0.begin(), x0.end(), x0_large.begin());

    Trajectory ts = integrate(small, x0, u, T, opts);
    Trajectory tl = integrate(large, x0_large, u, T, opts);
    require(!ts.overflow && !tl.overflow, "probe trajectories diverged");

    ProbeReport rep;
    rep.n = n;
    rep.n_large = factor * n;
    const std::size_t d = small.layout().flat_dim();
    std::vector<double> diff(d);
    const std::size_t samples = std::min(ts.samples(), tl.samples());
    for (std::size_t k = 0; k < samples; ++k) {
        auto a = ts.state(k);
        auto b = tl.state(k);
        for (std::size_t i = 0; i < d; ++i) diff[i] = a[i] - b[i];
        const double dist = lp_norm(small.layout(), diff, net.p);
        if (dist > rep.sup_diff) {
            rep.sup_diff = dist;
            rep.at_time = ts.times[k];
        }
    }
    return rep;
}

double local_V(const NetworkSpec& net, std::size_t i,
               std::span<const double> block_state) {
    const SubsystemSpec& sub = net.subsystem(i);
    require(block_state.size() == static_cast<std::size_t>(sub.n),
            "block state dimension mismatch");
    if (sub.V.kind == LocalLyapunov::Kind::quadratic_form) {
        double acc = 0.0;
        for (Eigen::Index r = 0; r < sub.V.P.rows(); ++r) {
            double row = 0.0;
            for (Eigen::Index c = 0; c < sub.V.P.cols(); ++c)
                row += sub.V.P(r, c) * block_state[static_cast<std::size_t>(c)];
            acc += block_state[static_cast<std::size_t>(r)] * row;
        }
        return acc;
    }
    const double dist = block_dist(block_state, net.sets.block(i));
    return sub.V.scale * std::pow(dist, net.p);
}

}  // namespace smallgain
