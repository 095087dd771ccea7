#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smallgain/apps.hpp"
#include "smallgain/gainop.hpp"
#include "smallgain/netsim.hpp"
#include "smallgain/seqspace.hpp"

namespace smallgain {

// Initial-condition recipe, materialized against a concrete layout at run
// time. Random blocks draw from a seed-keyed generator with an explicit bit
// transform, so the same seed reproduces the same state on any platform.
struct InitialState {
    enum class Kind { zeros, blocks, random };
    Kind kind = Kind::zeros;
    std::vector<std::vector<double>> blocks;  // leading blocks, rest zero
    std::size_t random_blocks = 0;
    double amplitude = 1.0;
};

std::vector<double> materialize(const InitialState& init,
                                const BlockLayout& layout,
                                std::uint64_t seed);

// Explicit envelope constants for runs without a certificate; gain_value is
// the constant added for the input term.
struct EnvelopeOverride {
    double M = 1.0;
    double a = 0.0;
    double gain_value = 0.0;
};

struct SimulateParams {
    std::size_t blocks = 1;
    double T = 1.0;
    IntegrateOptions integrate;
    InitialState x0;
    InputSignal input = InputSignal::zero();
    std::optional<EnvelopeOverride> envelope;
    double tol = 1e-6;
    std::size_t csv_stride = 50;
};

struct TimevaryingParams {
    double lambda0 = 1.0;
    std::vector<double> t0_samples;
    std::vector<InitialState> x0_samples;
    std::size_t blocks = 1;  // materialized base blocks per initial state
    UniformityOptions options;
};

struct ConsensusRunParams {
    std::size_t blocks = 1;  // materialized agents, also the error modes
    double T = 1.0;
    IntegrateOptions integrate;
    InitialState x0;  // agent states; error coordinates derive from them
    ConsensusOptions metrics;
    std::size_t csv_stride = 50;
};

struct ObserverRunParams {
    std::size_t blocks = 1;
    double T = 1.0;
    IntegrateOptions integrate;
    InitialState x0;     // plant halves
    InitialState xhat0;  // observer halves
    double tol = 1e-9;
    std::size_t csv_stride = 50;
};

// One parsed scenario file. Sections are optional; each command requires the
// ones it consumes. Parsing is strict: unknown keys, wrong types, and
// malformed shapes are rejected with the offending location in the message.
struct Scenario {
    std::uint64_t seed = 0;
    std::optional<GainSpec> gain;  // bare gain data, enough for analyze
    std::optional<NetworkSpec> network;
    std::optional<ConsensusSpec> consensus;
    std::optional<ObserverSpec> observer;
    AnalyzeOptions analyze;
    std::optional<SimulateParams> simulate;
    std::optional<TimevaryingParams> timevarying;
    std::optional<ConsensusRunParams> consensus_run;
    std::optional<ObserverRunParams> observer_run;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

}  // namespace smallgain