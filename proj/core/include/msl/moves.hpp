#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "msl/fields.hpp"
#include "msl/lidar_data.hpp"
#include "msl/model.hpp"
#include "msl/random.hpp"

namespace msl {

enum class MoveKind : std::uint8_t { birth, death, dilation, erosion, shift, mark, split, merge };
inline constexpr std::size_t kMoveKinds = 8;
inline constexpr std::array<MoveKind, kMoveKinds> kAllMoves = {MoveKind::birth, MoveKind::death, MoveKind::dilation,
                                                               MoveKind::erosion, MoveKind::shift, MoveKind::mark,
                                                               MoveKind::split, MoveKind::merge};
std::string_view move_name(MoveKind k);

// Family probabilities and the share of the first move inside each paired family.
struct MoveProbabilities {
    double birth_family = 0.2;
    double birth = 0.5;
    double dilation_family = 0.3;
    double dilation = 0.5;
    double shift = 0.2;
    double mark = 0.2;
    double split_family = 0.1;
    double split = 0.5;

    void validate() const;
    double probability(MoveKind k) const;
};

struct ProposalScales {
    double mark_variance = 0.05;
    double shift_variance = 2.0;
    double split_eta = 2.0;

    void validate() const;
};

// Everything a chain needs that does not change while it runs.
struct ChainSetup {
    const LidarCube* cube = nullptr;
    const SamplingMask* mask = nullptr;
    const ImpulseResponse* irf = nullptr;
    ModelHyper hyper;
    GammaHyper prior;
    std::vector<double> sbr;
    MoveProbabilities moves;
    ProposalScales scales;
    // hop radius of the local log-determinant window; <= 0 factorises whole components
    int logdet_radius = 3;

    void validate() const;
};

struct BackgroundChange {
    std::size_t i, j, l;
    double value;
};

struct Edit {
    std::vector<PointId> removed;
    std::vector<Point> added;
    std::vector<std::pair<PointId, Point>> modified;
    std::vector<BackgroundChange> background;
};

struct EditAssessment {
    bool feasible = false;
    double delta = 0.0;           // log-posterior difference after - before
    std::size_t connected_after = 0;
    std::size_t pairs_after = 0;
    bool logdet_exact = true;
};

struct Fenwick {
    std::vector<std::int64_t> tree;
    void reset(std::size_t n) { tree.assign(n + 1, 0); }
    void add(std::size_t i, std::int64_t v) {
        for (++i; i < tree.size(); i += i & (~i + 1)) tree[i] += v;
    }
    // index of the element holding the k-th unit (0-based)
    std::size_t find(std::int64_t k) const;
};

class ChainState {
public:
    ChainState(const ChainSetup& setup, PointCloud cloud, BackgroundField bg);

    const ChainSetup& setup() const { return *setup_; }
    const PointCloud& cloud() const { return cloud_; }
    const BackgroundField& background() const { return bg_; }

    // |V|: pixels x (T - 1), the Lebesgue measure of the position domain
    double volume() const;
    double log_likelihood() const { return loglik_total_; }

    std::size_t connected_count() const { return std::size_t(conn_total_); }
    std::size_t merge_pair_count() const { return std::size_t(pair_total_); }
    PointId connected_point(std::size_t k) const;
    std::pair<PointId, PointId> merge_pair(std::size_t k) const;
    bool is_connected(PointId id) const;
    bool mergeable(const Point& a, const Point& b) const;

    // admissible dilation measure around a donor in the current state
    double admissible_measure(PointId donor) const;

    // Evaluates the posterior change of an edit by applying it temporarily.
    // after_hook, when given, runs while the edit is applied.
    EditAssessment assess(const Edit& edit, const std::function<void(const ChainState&)>& after_hook = {});
    // applies an edit for good; returns ids of added points
    std::vector<PointId> commit(const Edit& edit);

    void gibbs_sweep(Rng& rng);
    void replace_background(const BackgroundField& bg);

    double full_log_posterior() const;
    // max absolute difference between cached and recomputed likelihood terms and counters
    double cache_discrepancy() const;

private:
    struct Undo {
        std::vector<PointId> added_ids;
        std::vector<std::pair<PointId, Point>> removed;
        std::vector<std::pair<PointId, Point>> modified;
        std::vector<std::pair<std::size_t, double>> background;
    };

    Undo apply(const Edit& edit);
    void undo(Undo& u);
    bool feasible_after(const Undo& u) const;
    std::int64_t count_connected(std::size_t pixel) const;
    std::int64_t count_pairs(std::size_t pixel) const;
    double local_quadratic(const std::vector<PointId>& changed) const;
    void window(const std::vector<PointId>& changed, std::vector<PointId>& unchanged_out, bool& exhausted,
                const std::vector<std::uint8_t>& changed_mask) const;
    double window_logdet(const std::vector<PointId>& nodes) const;

    const ChainSetup* setup_;
    PointCloud cloud_;
    BackgroundField bg_;
    std::vector<double> loglik_;
    double loglik_total_ = 0.0;
    std::vector<std::int64_t> conn_, pairs_;
    std::int64_t conn_total_ = 0, pair_total_ = 0;
    Fenwick conn_tree_, pair_tree_;
    mutable std::vector<PointId> scratch_;
};

struct Proposal {
    MoveKind kind = MoveKind::birth;
    bool valid = false; // false when the move had nothing to act on
    Edit edit;
    double delta_log_posterior = 0.0;
    double log_proposal = 0.0; // proposal ratio and Jacobian
    double log_ratio = -std::numeric_limits<double>::infinity();
};

struct BirthAux {
    std::uint32_t x, y;
    double t;
    std::vector<double> u;
};
struct DeathAux {
    PointId id;
};
struct DilationAux {
    std::uint32_t x, y;
    double t;
    std::vector<double> u;
};
struct ErosionAux {
    PointId id;
};
struct ShiftAux {
    PointId id;
    double t;
};
struct MarkAux {
    PointId id;
    std::size_t band;
    double m;
};
struct SplitAux {
    PointId id;
    std::vector<double> u;
    double delta;
    bool flip;
};
struct MergeAux {
    PointId first, second;
};

Proposal propose_birth(ChainState& s, const BirthAux& a);
Proposal propose_death(ChainState& s, const DeathAux& a);
Proposal propose_dilation(ChainState& s, const DilationAux& a);
Proposal propose_erosion(ChainState& s, const ErosionAux& a);
Proposal propose_shift(ChainState& s, const ShiftAux& a);
Proposal propose_mark(ChainState& s, const MarkAux& a);
Proposal propose_split(ChainState& s, const SplitAux& a);
Proposal propose_merge(ChainState& s, const MergeAux& a);

std::optional<BirthAux> draw_birth(const ChainState& s, Rng& rng);
std::optional<DeathAux> draw_death(const ChainState& s, Rng& rng);
std::optional<DilationAux> draw_dilation(const ChainState& s, Rng& rng);
std::optional<ErosionAux> draw_erosion(const ChainState& s, Rng& rng);
std::optional<ShiftAux> draw_shift(const ChainState& s, Rng& rng);
std::optional<SplitAux> draw_split(const ChainState& s, Rng& rng);
std::optional<MergeAux> draw_merge(const ChainState& s, Rng& rng);

// the merge that undoes a split, and the split that undoes a merge
Point merge_points(const Point& a, const Point& b);
std::pair<Point, Point> split_point(const Point& p, const std::vector<double>& u, double delta, bool flip);
SplitAux split_inverse_aux(const Point& a, const Point& b);

// dilation/erosion position density w.r.t. Lebesgue measure when proposing position (x,y,t) from the
// current state, donors taken among current points
double dilation_density(const ChainState& s, std::uint32_t x, std::uint32_t y, double t);

} // namespace msl
