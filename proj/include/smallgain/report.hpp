#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smallgain/apps.hpp"
#include "smallgain/certify.hpp"
#include "smallgain/gainop.hpp"
#include "smallgain/netsim.hpp"

namespace smallgain {

struct ReportMeta {
    std::string command;
    std::uint64_t seed = 0;
    // Omits wall-clock fields, so equal inputs give byte-equal reports.
    bool fixed_clock = false;
};

struct SimulateResult {
    std::size_t blocks = 0;
    double T = 0.0;
    double dt = 0.0;
    double input_sup = 0.0;
    std::optional<AnalyzeReport> analysis;
    std::optional<EnvelopeReport> envelope;
    std::optional<EnvelopeReport> practical;
    std::optional<MarginSeries> dissipation;
    std::optional<MarginSeries> coercivity;
    std::optional<MarginSeries> monotone;
    double max_defect = 0.0;
    bool overflow = false;
    int exit_code = 0;
};

struct TimevaryingResult {
    double lambda0 = 1.0;
    std::optional<AnalyzeReport> analysis;
    UniformityReport uniformity;
    int exit_code = 0;
};

struct ConsensusResult {
    std::size_t agents = 0;
    double conservation_drift = 0.0;
    double coordinate_gap = 0.0;
    ConsensusReport metrics;
    int exit_code = 0;
};

struct ObserverResult {
    std::size_t blocks = 0;
    std::optional<AnalyzeReport> analysis;
    ObserverReport report;
    int exit_code = 0;
};

// JSON report bodies. Keys keep insertion order and doubles print in
// round-trip form, so a fixed build maps equal inputs to equal bytes.
std::string analyze_report_json(const AnalyzeReport& rep,
                                const ReportMeta& meta);
std::string simulate_report_json(const SimulateResult& res,
                                 const ReportMeta& meta);
std::string timevarying_report_json(const TimevaryingResult& res,
                                    const ReportMeta& meta);
std::string consensus_report_json(const ConsensusResult& res,
                                  const ReportMeta& meta);
std::string observer_report_json(const ObserverResult& res,
                                 const ReportMeta& meta);

// Plot-ready series. Headers are fixed: trajectories `t,block,coord,value`,
// margins `t,check,margin`, consensus `t,e_l1,mode,mode_err`.
void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          std::size_t stride);
void write_margins_csv(const std::string& path,
                       const std::vector<const MarginSeries*>& series);
void write_consensus_csv(const std::string& path, const Trajectory& traj,
                         const ConsensusSpec& cs, std::size_t n_modes,
                         std::size_t stride);

}  // namespace smallgain