#include "msl/rjmcmc.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "msl/errors.hpp"

namespace msl {

void ChainConfig::validate() const {
    if (n_burnin > n_iter) throw ValidationError("burn-in longer than the chain");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
        throw ValidationError("target acceptance must lie in (0,1)");
}

double MoveStats::rate(MoveKind k) const {
    auto i = std::size_t(k);
    return proposed[i] ? double(accepted[i]) / double(proposed[i]) : 0.0;
}

MoveKind draw_move(const MoveProbabilities& p, Rng& rng) {
    double r = uniform01(rng);
    for (MoveKind k : kAllMoves) {
        r -= p.probability(k);
        if (r < 0.0) return k;
    }
    for (auto it = kAllMoves.rbegin(); it != kAllMoves.rend(); ++it)
        if (p.probability(*it) > 0.0) return *it;
    return MoveKind::birth;
}

namespace {

bool accept(ChainState& s, const Proposal& pr, Rng& rng, MoveStats& stats) {
    auto i = std::size_t(pr.kind);
    if (!pr.valid) {
        ++stats.skipped[i];
        return false;
    }
    ++stats.proposed[i];
    if (pr.log_ratio == -std::numeric_limits<double>::infinity()) return false;
    if (pr.log_ratio >= 0.0 || std::log(uniform01(rng)) < pr.log_ratio) {
        s.commit(pr.edit);
        ++stats.accepted[i];
        return true;
    }
    return false;
}

template <class Aux, class Propose>
bool step(ChainState& s, MoveKind kind, const std::optional<Aux>& aux, Propose propose, Rng& rng,
          MoveStats& stats) {
    if (!aux) {
        ++stats.skipped[std::size_t(kind)];
        return false;
    }
    return accept(s, propose(s, *aux), rng, stats);
}

} // namespace

bool mh_step(ChainState& s, MoveKind kind, Rng& rng, MoveStats& stats) {
    switch (kind) {
    case MoveKind::birth: return step(s, kind, draw_birth(s, rng), propose_birth, rng, stats);
    case MoveKind::death: return step(s, kind, draw_death(s, rng), propose_death, rng, stats);
    case MoveKind::dilation: return step(s, kind, draw_dilation(s, rng), propose_dilation, rng, stats);
    case MoveKind::erosion: return step(s, kind, draw_erosion(s, rng), propose_erosion, rng, stats);
    case MoveKind::shift: return step(s, kind, draw_shift(s, rng), propose_shift, rng, stats);
    case MoveKind::split: return step(s, kind, draw_split(s, rng), propose_split, rng, stats);
    case MoveKind::merge: return step(s, kind, draw_merge(s, rng), propose_merge, rng, stats);
    case MoveKind::mark: {
        auto d = draw_death(s, rng);
        if (!d) {
            ++stats.skipped[std::size_t(kind)];
            return false;
        }
        std::normal_distribution<double> n(0.0, std::sqrt(s.setup().scales.mark_variance));
        bool any = false;
        for (std::size_t l = 0; l < s.cloud().bands(); ++l) {
            MarkAux a{d->id, l, s.cloud()[d->id].m[l] + n(rng)};
            any |= accept(s, propose_mark(s, a), rng, stats);
        }
        return any;
    }
    }
    return false;
}

ChainResult run_chain(const ChainSetup& setup_in, PointCloud init, BackgroundField init_bg, const ChainConfig& cfg) {
    cfg.validate();
    ChainSetup setup = setup_in;
    ChainState state(setup, std::move(init), std::move(init_bg));
    Rng rng = make_rng(cfg.seed);

    ChainResult res;
    res.map_cloud = state.cloud();
    res.map_background = state.background();
    res.map_log_posterior = state.full_log_posterior();
    res.mmse_background = state.background();
    res.tuned = setup.scales;
    if (cfg.record_trace) res.trace.push_back({0, res.map_log_posterior, state.cloud().size(), {}});

    const std::size_t moves =
        cfg.moves_per_iteration ? cfg.moves_per_iteration : setup.cube->dims().pixels();
    std::vector<double> bg_sum(state.background().size(), 0.0);
    std::size_t kept = 0;

    for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
        MoveStats before = res.stats;
        for (std::size_t k = 0; k < moves; ++k) mh_step(state, draw_move(setup.moves, rng), rng, res.stats);
        state.gibbs_sweep(rng);

        if (cfg.adapt && it <= cfg.n_burnin) {
            auto adapt = [&](MoveKind kind, double& var) {
                auto i = std::size_t(kind);
                auto prop = res.stats.proposed[i] - before.proposed[i];
                if (prop == 0) return;
                double rate = double(res.stats.accepted[i] - before.accepted[i]) / double(prop);
                double lv = std::log(var) + (rate - cfg.target_acceptance) / std::sqrt(double(it));
                var = std::exp(std::clamp(lv, std::log(1e-4), std::log(1e4)));
            };
            adapt(MoveKind::shift, setup.scales.shift_variance);
            adapt(MoveKind::mark, setup.scales.mark_variance);
        }

        double lp = state.full_log_posterior();
        if (lp > res.map_log_posterior) {
            res.map_log_posterior = lp;
            res.map_cloud = state.cloud();
            res.map_background = state.background();
        }
        if (it > cfg.n_burnin) {
            for (std::size_t f = 0; f < bg_sum.size(); ++f) bg_sum[f] += state.background().at(f);
            ++kept;
        }
        if (cfg.record_trace) res.trace.push_back({it, lp, state.cloud().size(), res.stats.accepted});
    }
    if (kept) {
        for (std::size_t f = 0; f < bg_sum.size(); ++f) res.mmse_background.at(f) = bg_sum[f] / double(kept);
    } else {
        res.mmse_background = state.background();
    }
    res.last_cloud = state.cloud();
    res.last_background = state.background();
    res.tuned = setup.scales;
    return res;
}

ChainResult run_chains(const ChainSetup& setup, const PointCloud& init, const BackgroundField& init_bg,
                       const ChainConfig& cfg, std::size_t n_chains) {
    if (n_chains == 0) throw ValidationError("need at least one chain");
    if (n_chains == 1) return run_chain(setup, init, init_bg, cfg);
    std::vector<ChainResult> results(n_chains);
    std::vector<std::exception_ptr> errors(n_chains);
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < n_chains; ++c) {
        threads.emplace_back([&, c] {
            try {
                ChainConfig cc = cfg;
                cc.seed = mix_seed(cfg.seed, c);
                results[c] = run_chain(setup, init, init_bg, cc);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_chains; ++c)
        if (results[c].map_log_posterior > results[best].map_log_posterior) best = c;
    return std::move(results[best]);
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "iteration,log_posterior,n_points";
    for (MoveKind k : kAllMoves) os << ",accepted_" << move_name(k);
    os << '\n';
    os.precision(17);
    for (const auto& r : trace) {
        os << r.iteration << ',' << r.log_posterior << ',' << r.n_points;
        for (auto a : r.accepted) os << ',' << a;
        os << '\n';
    }
}

} // namespace msl
