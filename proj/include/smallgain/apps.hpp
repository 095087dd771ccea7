#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "smallgain/certify.hpp"
#include "smallgain/errors.hpp"
#include "smallgain/gainop.hpp"
#include "smallgain/netsim.hpp"
#include "smallgain/seqspace.hpp"

namespace smallgain {

// A time-varying network next to its time-invariant rewrite. The rewrite
// prepends a scalar clock block with unit drift; every time coefficient of
// the original reads the clock state instead of the integration time, so
// starting the clock at t0 reproduces the original run started at t0.
struct ClockAugmented {
    NetworkSpec base;
    NetworkSpec augmented;
};

// The clock block gets set Full, a zero local function, decay rate lambda0,
// and an empty gain row and column, so lambda0 pads the rate data without
// ever binding a certificate. Throws unless tv is marked time-varying.
ClockAugmented clock_augment(const NetworkSpec& tv, double lambda0 = 1.0);

struct UniformityRun {
    double t0 = 0.0;
    std::size_t x0_index = 0;
    EnvelopeReport envelope;
};

struct UniformityOptions {
    double T = 10.0;
    IntegrateOptions integrate;
    // Envelope constants; negative selects the certificate overshoot and
    // decay rate.
    double envelope_M = -1.0;
    double envelope_a = -1.0;
    double tol = 1e-6;
};

// Uniformity over initial times: one (M, a) pair must cover every run.
struct UniformityReport {
    std::vector<UniformityRun> runs;
    double M = 1.0;
    double a = 0.0;
    double worst_margin = std::numeric_limits<double>::infinity();
    bool pass = true;
};

// Simulates the augmented system from clock value t0 and base state x0 for
// every pair in t0_samples x x0_samples and checks the shared decay envelope
// on the distance to the target set (the base distance, clock ignored). u is
// consumed in integration time with augmented block indices: the same
// relative input drives every start. Throws NumericError on divergence.
UniformityReport ueiss_check(const ClockAugmented& aug, const Certificate& cert,
                             std::span<const double> t0_samples,
                             std::span<const TruncSeq> x0_samples,
                             const InputSignal& u,
                             const UniformityOptions& opts = {});

// One undirected coupling edge; a pair listed in both orientations must
// carry the same weight.
struct ConsensusEdge {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight = 1.0;
};

// Identical agents x_i' = f(x_i) + sigma B sum_j alpha_j a_ij (x_j - x_i)
// over an infinite graph: a banded coupling rule that holds at every index
// plus optional explicit edges near the head. The averaging weights alpha
// are positive with unit total, explicit prefix plus geometric tail, so the
// weighted average and its error coordinates stay exactly computable.
struct ConsensusSpec {
    int n = 1;
    // Common drift f as self-sourced terms with f(0) = 0 and constant
    // coefficients; the global Lipschitz constant is declared, not derived.
    std::vector<SumTerm> agent_terms;
    double lipschitz = 0.0;
    Eigen::MatrixXd B;
    double sigma = 1.0;
    WeightRule alpha;  // first must be 0; total must be 1
    // Coupling weight per index offset, the same at every agent; the largest
    // declared weight (band or edge) must be 1.
    std::vector<std::pair<std::size_t, double>> band;
    std::vector<ConsensusEdge> edges;
};

// Error coordinates on l^1: block 0 carries the weighted average x_a, block
// i >= 1 carries e_{i-1} = alpha_{i-1} (x_{i-1} - x_a). The average evolves
// through a weighted gather over all error blocks; every error block reads
// the average block as its anchor. Index-dependent coefficients force an
// explicit prefix of n_error_blocks agents; simulations must not truncate
// beyond it, the tail past the prefix is inert.
NetworkSpec build_consensus_error_system(const ConsensusSpec& cs,
                                         std::size_t n_error_blocks);

// The same agents in original coordinates, materialized for n_agents blocks.
NetworkSpec build_consensus_original_system(const ConsensusSpec& cs,
                                            std::size_t n_agents);

// Transforms an original-coordinate initial state into the error layout:
// block 0 gets the (truncated) weighted average, later blocks the weighted
// deviations, including agents beyond x0's truncation, which sit at zero.
TruncSeq consensus_error_initial(const ConsensusSpec& cs, const TruncSeq& x0,
                                 std::size_t n_error_blocks);

// Drift of the weighted average sum_i alpha_i x_i(t) along an
// original-coordinate trajectory: max_t |avg(t) - avg(0)|. The coupling sum
// cancels by edge symmetry, so for f = 0 this is integrator noise.
double consensus_conservation_drift(const Trajectory& original,
                                    const ConsensusSpec& cs);

// Worst disagreement between an original-coordinate and an error-coordinate
// run of the same scenario: compares the average block and every error block
// against alpha_i (x_i - avg) recomputed from the original states.
double consensus_coordinate_gap(const Trajectory& original,
                                const Trajectory& errors,
                                const ConsensusSpec& cs);

struct ModeBound {
    std::size_t mode = 0;  // agent index
    double alpha = 0.0;
    double peak = 0.0;  // max_t |x_mode(t) - x_a(t)|
    double worst_margin = 0.0;
};

struct ConsensusOptions {
    // Envelope constants; negative a selects the fitted decay rate and
    // negative M the tightest constant that majorizes the observed l^1
    // series at that rate.
    double M = -1.0;
    double a = -1.0;
    std::size_t n_modes = 10;
    double tol = 1e-9;
};

struct ConsensusReport {
    MarginSeries l1_envelope;  // |e(t)|_1 against M e^{-at} |e(0)|_1
    MarginSeries scaled_sum;   // leading-mode sum against (M/alpha_min) ...
    std::vector<ModeBound> modes;
    DecayFit fit;
    bool fit_valid = false;
    double M = 1.0;
    double a = 0.0;
    double alpha_min = 0.0;  // min alpha over the reported modes
    bool pass = false;
};

// Decay metrics over an error-coordinate trajectory: the l^1 error envelope,
// the rescaled sum bound over the first n_modes agents, and the per-mode
// bound table. The mode bounds follow from the l^1 envelope by dividing by
// alpha, so their overshoots grow as the weights shrink.
ConsensusReport consensus_metrics(const Trajectory& traj,
                                  const ConsensusSpec& cs,
                                  const ConsensusOptions& opts = {});

// Linear plant chain observed block-wise by Luenberger correction: plant
// x_i' = A x_i + sum_k M_k x_{i+k}, output y_i = C x_i, observer copy driven
// by K (y_i - C xhat_i). Gain data for the paired error blocks is declared,
// not derived.
struct ObserverSpec {
    int n = 1;    // plant block dimension
    int m_y = 1;  // measured output dimension
    Eigen::MatrixXd A;
    // Neighbor maps by nonzero index offset, applied to plant and observer
    // alike.
    std::vector<std::pair<int, Eigen::MatrixXd>> coupling;
    Eigen::MatrixXd C;
    Eigen::MatrixXd K;
    GainSpec gain;
};

// Paired blocks z_i = (x_i, xhat_i) with the correction wired through the
// inline output: z' self map is [[A, 0], [KC, A-KC]]. Every block set is the
// diagonal x = xhat; V_i = |x_i - xhat_i|^2, so the coercivity constants
// against the squared block distance are 2 on both sides. External inputs
// are zero. Throws on an output-dimension mismatch between C and K.
NetworkSpec build_observer_composite(const ObserverSpec& os);

enum class ObserverVerdict { yes, no, inconclusive };

struct ObserverReport {
    std::vector<double> times;
    std::vector<double> error;  // |x(t) - xhat(t)|_p
    // Largest deviation of sqrt(2) * pair distance to the diagonal from the
    // directly computed error norm.
    double identity_worst = 0.0;
    EnvelopeReport envelope;
    ObserverVerdict verdict = ObserverVerdict::inconclusive;
};

// Error decay along a composite trajectory: the error norm series, the
// distance identity check, and the certificate envelope on the distance to
// the diagonal. Verdict yes needs the envelope to hold with a positive
// fitted rate (or an identically zero error), no needs a fitted growth.
ObserverReport observer_error_decay(const Trajectory& traj,
                                    const ObserverSpec& os,
                                    const Certificate& cert, double tol = 1e-9);

}  // namespace smallgain
