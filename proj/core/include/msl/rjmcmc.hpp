#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <vector>

#include "msl/moves.hpp"

namespace msl {

struct ChainConfig {
    std::size_t n_iter = 100;   // sweeps
    std::size_t n_burnin = 50;  // sweeps
    std::size_t moves_per_iteration = 0; // 0: one move per pixel
    std::uint64_t seed = 1;
    bool adapt = true;
    double target_acceptance = 0.41;
    bool record_trace = true;

    void validate() const;
};

struct MoveStats {
    std::array<std::uint64_t, kMoveKinds> proposed{};
    std::array<std::uint64_t, kMoveKinds> accepted{};
    std::array<std::uint64_t, kMoveKinds> skipped{};

    double rate(MoveKind k) const;
};

struct TraceRow {
    std::size_t iteration = 0;
    double log_posterior = 0.0;
    std::size_t n_points = 0;
    std::array<std::uint64_t, kMoveKinds> accepted{};
};

struct ChainResult {
    PointCloud map_cloud;
    BackgroundField map_background;
    double map_log_posterior = 0.0;
    BackgroundField mmse_background;
    PointCloud last_cloud;
    BackgroundField last_background;
    MoveStats stats;
    std::vector<TraceRow> trace;
    ProposalScales tuned;
};

// Runs n_iter sweeps; each sweep makes moves_per_iteration RJ-MCMC moves, then a background Gibbs sweep.
ChainResult run_chain(const ChainSetup& setup, PointCloud init, BackgroundField init_bg, const ChainConfig& cfg);

// independent chains on threads, seeds derived from cfg.seed; returns the chain with the highest MAP
ChainResult run_chains(const ChainSetup& setup, const PointCloud& init, const BackgroundField& init_bg,
                       const ChainConfig& cfg, std::size_t n_chains);

// One MH step of the given kind drawn with rng; returns true when accepted.
// Mark moves update every band of one point with sequential MH steps.
bool mh_step(ChainState& state, MoveKind kind, Rng& rng, MoveStats& stats);

MoveKind draw_move(const MoveProbabilities& p, Rng& rng);

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

} // namespace msl
