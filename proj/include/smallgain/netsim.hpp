#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "smallgain/errors.hpp"
#include "smallgain/gainop.hpp"
#include "smallgain/seqspace.hpp"

namespace smallgain {

// Elementwise nonlinearities available to the dynamics library. Every entry
// has a known Lipschitz constant, which keeps declared subsystem constants
// checkable.
enum class Phi { identity, saturation, sine, cubic, lookup };

// Scalar factor c0 + c1 * sin(omega * tau + phase) multiplying a whole term.
// tau is the integration time, or the first coordinate of the clock_block
// state when set; the latter makes clock-augmented systems time-invariant.
struct TimeCoeff {
    double c0 = 1.0;
    double c1 = 0.0;
    double omega = 1.0;
    double phase = 0.0;
    std::optional<std::size_t> clock_block;

    double operator()(double tau) const {
        return c1 == 0.0 ? c0 : c0 + c1 * std::sin(omega * tau + phase);
    }
    double sup() const { return std::abs(c0) + std::abs(c1); }
};

// One argument of a term: a linear read of the own state, the own input, a
// block at a fixed offset from the owner, or a block at an absolute index.
// Out-of-range block reads see the zero state (zero-boundary truncation).
struct SourceRef {
    enum class Kind { self, input, rel_block, abs_block };
    Kind kind = Kind::self;
    long long index = 0;  // offset for rel_block, block id for abs_block
    Eigen::MatrixXd pre;  // maps the source into the term's argument space
};

// value = coeff(t) * post * phi.(sum_k pre_k * source_k + bias).
struct SumTerm {
    std::vector<SourceRef> sources;
    Eigen::VectorXd bias;  // size 0 means zero
    Phi phi = Phi::identity;
    double sat_limit = 1.0;
    std::vector<std::pair<double, double>> table;  // lookup breakpoints (x, y)
    Eigen::MatrixXd post;
    TimeCoeff coeff;
};

// Weighted accumulation over every non-averaged block present in the
// truncation:
//   value = coeff(t) * sum_{j>=first, j<N} w_j * post *
//           phi.(pre_gather * x_j / w_j + pre_self * x_anchor + bias).
// This is the shape of an averaged vector field over reconstructed agent
// states; w is the positive weight rule with unit sum.
struct WeightRule {
    std::vector<double> prefix;  // weights for blocks first .. first+len-1
    double tail_base = 0.0;      // weight of the first tail block
    double tail_ratio = 0.5;     // geometric ratio, in (0,1)
    std::size_t first = 1;       // blocks below this index carry no weight

    double at(std::size_t block) const;
    // sum over blocks first..N-1, closed form for the geometric tail.
    double partial_sum(std::size_t n) const;
    double total() const;  // sum over all blocks
    double min_over(std::size_t n) const;
};

struct GatherTerm {
    WeightRule weights;
    Eigen::MatrixXd pre_gather;
    Eigen::MatrixXd pre_self;
    Eigen::VectorXd bias;
    Phi phi = Phi::identity;
    double sat_limit = 1.0;
    Eigen::MatrixXd post;
    TimeCoeff coeff;
    // Block whose state pre_self is applied to: the owner by default, or a
    // fixed block (for error fields anchored at a shared average block).
    SourceRef anchor;
};

using Term = std::variant<SumTerm, GatherTerm>;

// Local Lyapunov data: either a quadratic form x^T P x on the block or the
// p-th power of the block distance to the block's set, scaled.
struct LocalLyapunov {
    enum class Kind { quadratic_form, distance_power };
    Kind kind = Kind::distance_power;
    Eigen::MatrixXd P;
    double scale = 1.0;
    double alpha_lo = 1.0;  // declared sandwich against block_dist^p
    double alpha_hi = 1.0;
};

struct SubsystemSpec {
    int n = 1;
    int m = 0;
    std::vector<Term> terms;
    double lipschitz = 0.0;  // declared bound on the state-Lipschitz constant
    LocalLyapunov V;
};

// Infinite network: explicit subsystem prefix plus a structurally repeated
// tail subsystem whose relative block reads shift with the index.
struct NetworkSpec {
    std::vector<SubsystemSpec> prefix;
    SubsystemSpec tail;
    GainSpec gain;
    SetSpec sets;
    double p = 2.0;
    double q = 2.0;
    bool time_varying = false;

    NetworkSpec(std::vector<SubsystemSpec> prefix_, SubsystemSpec tail_,
                GainSpec gain_, SetSpec sets_, double p_, double q_,
                bool time_varying_ = false);

    const SubsystemSpec& subsystem(std::size_t i) const {
        return i < prefix.size() ? prefix[i] : tail;
    }
};

// Input signal over the block structure: evaluates per block and carries a
// true essential-sup bound of the l^q block norm.
class InputSignal {
public:
    struct Constant {
        std::vector<Eigen::VectorXd> prefix;
        Eigen::VectorXd tail;  // size 0 means zero beyond the prefix
    };
    struct Piece {
        double from = 0.0;
        Constant value;
    };
    struct Sinusoid {
        Constant amplitude;
        double omega = 1.0;
        double phase = 0.0;
    };

    static InputSignal zero();
    static InputSignal constant(Constant value, double q);
    static InputSignal piecewise(std::vector<Piece> pieces, double q);
    static InputSignal sinusoid(Sinusoid s, double q);

    // u_i(t); result has the dimension of the stored data (zero vector when
    // the block carries no input).
    Eigen::VectorXd block(std::size_t i, double t) const;
    // Allocation-free variant for the integration hot path; out is zeroed
    // first and filled up to min(out.size(), stored dimension).
    void block_into(std::size_t i, double t, std::span<double> out) const;
    double sup_norm_q() const { return q_sup_; }
    bool is_zero() const { return kind_ == Kind::zero; }

private:
    enum class Kind { zero, constant, piecewise, sinusoid };
    InputSignal() = default;
    Kind kind_ = Kind::zero;
    Constant constant_;
    std::vector<Piece> pieces_;
    Sinusoid sin_;
    double q_sup_ = 0.0;
};

// Finite ODE view of the first n blocks under the zero-boundary policy.
class TruncatedSystem {
public:
    TruncatedSystem(const NetworkSpec& net, std::size_t n);

    std::size_t blocks() const { return n_; }
    const BlockLayout& layout() const { return *layout_; }
    const NetworkSpec& net() const { return *net_; }

    // dx = f(t, x, u); x and dx are flat vectors of layout().flat_dim().
    void rhs(double t, std::span<const double> x, const InputSignal& u,
             std::span<double> dx) const;

private:
    const NetworkSpec* net_;
    std::size_t n_;
    std::shared_ptr<const BlockLayout> layout_;
    mutable std::vector<double> scratch_;
};

TruncatedSystem truncate(const NetworkSpec& net, std::size_t n);

struct IntegrateOptions {
    double dt = 1e-3;
    double t0 = 0.0;
    std::size_t defect_every = 50;   // half-step probe cadence, 0 disables
    double defect_warn = 1e-4;       // defect above this adds a warning record
    double overflow_limit = 1e12;    // sup-norm cut-off for early stop
};

struct Trajectory {
    std::shared_ptr<const BlockLayout> layout;
    std::vector<double> times;
    std::vector<double> flat;  // times.size() * layout->flat_dim(), row-major
    double dt = 0.0;
    double p = 2.0;
    double max_defect = 0.0;
    bool overflow = false;
    std::vector<std::pair<double, double>> defect_warnings;  // (t, defect)

    std::size_t samples() const { return times.size(); }
    std::span<const double> state(std::size_t k) const {
        return std::span<const double>(flat).subspan(k * layout->flat_dim(),
                                                     layout->flat_dim());
    }
    TruncSeq seq(std::size_t k) const;
};

// Classical fixed-step fourth-order integration with dense output at every
// step and a periodic half-step defect probe.
Trajectory integrate(const TruncatedSystem& sys, std::span<const double> x0,
                     const InputSignal& u, double T,
                     const IntegrateOptions& opts = {});

struct ProbeReport {
    std::size_t n = 0;
    std::size_t n_large = 0;
    double sup_diff = 0.0;  // sup over t of the l^p distance on the first n blocks
    double at_time = 0.0;
};

// Boundary-truncation sensitivity: integrate at n and factor*n and compare on
// the common leading blocks.
ProbeReport truncation_probe(const NetworkSpec& net, std::size_t n,
                             std::size_t factor, std::span<const double> x0,
                             const InputSignal& u, double T,
                             const IntegrateOptions& opts = {});

// V_i of one block state, resolved against the block's set descriptor.
double local_V(const NetworkSpec& net, std::size_t i,
               std::span<const double> block_state);

}  // namespace smallgain
