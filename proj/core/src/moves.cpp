#include "msl/moves.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SparseCholesky>

#include "msl/background.hpp"
#include "msl/errors.hpp"

namespace msl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_density(double u, double eta) {
    return std::lgamma(2.0 * eta) - 2.0 * std::lgamma(eta) + (eta - 1.0) * (std::log(u) + std::log1p(-u));
}

bool in_open_unit(double u) { return u > 0.0 && u < 1.0; }

double log_sum_exp2(double a, double b) {
    double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

template <class V, class T>
bool contains(const V& v, const T& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

} // namespace

std::string_view move_name(MoveKind k) {
    switch (k) {
    case MoveKind::birth: return "birth";
    case MoveKind::death: return "death";
    case MoveKind::dilation: return "dilation";
    case MoveKind::erosion: return "erosion";
    case MoveKind::shift: return "shift";
    case MoveKind::mark: return "mark";
    case MoveKind::split: return "split";
    case MoveKind::merge: return "merge";
    }
    return "?";
}

void MoveProbabilities::validate() const {
    for (double p : {birth_family, dilation_family, shift, mark, split_family})
        if (!(p >= 0.0)) throw ValidationError("move probabilities must be non-negative");
    for (double p : {birth, dilation, split})
        if (!(p > 0.0 && p < 1.0)) throw ValidationError("within-family shares must lie in (0,1)");
    double s = birth_family + dilation_family + shift + mark + split_family;
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("move family probabilities must sum to 1");
}

double MoveProbabilities::probability(MoveKind k) const {
    switch (k) {
    case MoveKind::birth: return birth_family * birth;
    case MoveKind::death: return birth_family * (1.0 - birth);
    case MoveKind::dilation: return dilation_family * dilation;
    case MoveKind::erosion: return dilation_family * (1.0 - dilation);
    case MoveKind::shift: return shift;
    case MoveKind::mark: return mark;
    case MoveKind::split: return split_family * split;
    case MoveKind::merge: return split_family * (1.0 - split);
    }
    return 0.0;
}

void ProposalScales::validate() const {
    if (!(mark_variance > 0) || !(shift_variance > 0) || !(split_eta > 0))
        throw ValidationError("proposal scales must be positive");
}

void ChainSetup::validate() const {
    if (!cube || !mask || !irf) throw ValidationError("chain setup is missing data");
    const auto& d = cube->dims();
    validate_pairing(*cube, *mask);
    if (irf->bands() != d.bands) throw ValidationError("impulse response band count differs from the cube");
    if (d.bins < 2) throw ValidationError("need at least two time bins");
    hyper.validate();
    moves.validate();
    scales.validate();
    if (sbr.size() != d.bands) throw ValidationError("one SBR value per band is required");
    for (double w : sbr)
        if (!(w > 0)) throw ValidationError("SBR must be positive");
    if (prior.shape.rows() != d.rows || prior.shape.cols() != d.cols || prior.shape.bands() != d.bands ||
        !prior.shape.same_shape(prior.scale))
        throw ValidationError("gamma hyperparameters do not match the cube");
    for (std::size_t f = 0; f < prior.shape.size(); ++f)
        if (!(prior.shape.at(f) > 0) || !(prior.scale.at(f) > 0))
            throw ValidationError("gamma hyperparameters must be positive");
}

std::size_t Fenwick::find(std::int64_t k) const {
    std::size_t pos = 0;
    std::size_t n = tree.size() - 1;
    std::size_t step = 1;
    while (step * 2 <= n) step *= 2;
    for (; step > 0; step /= 2) {
        if (pos + step <= n && tree[pos + step] <= k) {
            pos += step;
            k -= tree[pos];
        }
    }
    return pos;
}

ChainState::ChainState(const ChainSetup& setup, PointCloud cloud, BackgroundField bg)
    : setup_(&setup), cloud_(std::move(cloud)), bg_(std::move(bg)) {
    setup.validate();
    const auto& d = setup.cube->dims();
    if (cloud_.rows() != d.rows || cloud_.cols() != d.cols || cloud_.bands() != d.bands)
        throw ValidationError("initial cloud does not match the cube");
    if (bg_.rows() != d.rows || bg_.cols() != d.cols || bg_.bands() != d.bands)
        throw ValidationError("initial background does not match the cube");
    for (double b : bg_.values())
        if (!(b > 0) || !std::isfinite(b)) throw ValidationError("initial background must be positive");
    for (PointId id : cloud_.ids())
        if (cloud_[id].t < 1.0 || cloud_[id].t > double(d.bins)) throw ValidationError("initial point outside [1,T]");
    if (!strauss_valid(cloud_, setup.hyper.d_min)) throw ValidationError("initial cloud violates the hard-core");
    loglik_.assign(d.pixels() * d.bands, 0.0);
    conn_.assign(d.pixels(), 0);
    pairs_.assign(d.pixels(), 0);
    conn_tree_.reset(d.pixels());
    pair_tree_.reset(d.pixels());
    for (std::size_t p = 0; p < d.pixels(); ++p) {
        for (std::size_t l = 0; l < d.bands; ++l) {
            loglik_[p * d.bands + l] = pixel_band_loglik(*setup.cube, cloud_, bg_.at(p * d.bands + l),
                                                         setup.mask->at(p * d.bands + l), *setup.irf,
                                                         p / d.cols, p % d.cols, l);
            loglik_total_ += loglik_[p * d.bands + l];
        }
        conn_[p] = count_connected(p);
        pairs_[p] = count_pairs(p);
        conn_total_ += conn_[p];
        pair_total_ += pairs_[p];
        conn_tree_.add(p, conn_[p]);
        pair_tree_.add(p, pairs_[p]);
    }
}

double ChainState::volume() const {
    const auto& d = setup_->cube->dims();
    return double(d.pixels()) * double(d.bins - 1);
}

bool ChainState::is_connected(PointId id) const {
    const Point& p = cloud_[id];
    collect_neighbors(cloud_, p.x, p.y, p.t, setup_->hyper, scratch_);
    return !scratch_.empty();
}

bool ChainState::mergeable(const Point& a, const Point& b) const {
    if (a.x != b.x || a.y != b.y) return false;
    double dt = std::abs(a.t - b.t);
    return dt > setup_->hyper.d_min && dt <= double(setup_->irf->max_support());
}

std::int64_t ChainState::count_connected(std::size_t pixel) const {
    std::int64_t n = 0;
    for (PointId q : cloud_.at_pixel(pixel / cloud_.cols(), pixel % cloud_.cols())) n += is_connected(q);
    return n;
}

std::int64_t ChainState::count_pairs(std::size_t pixel) const {
    auto px = cloud_.at_pixel(pixel / cloud_.cols(), pixel % cloud_.cols());
    std::int64_t n = 0;
    for (std::size_t a = 0; a < px.size(); ++a)
        for (std::size_t b = a + 1; b < px.size(); ++b) n += mergeable(cloud_[px[a]], cloud_[px[b]]);
    return n;
}

PointId ChainState::connected_point(std::size_t k) const {
    if (std::int64_t(k) >= conn_total_) throw ValidationError("connected point index out of range");
    std::size_t pixel = conn_tree_.find(std::int64_t(k));
    std::int64_t before = 0;
    for (std::size_t i = pixel; i > 0; i -= i & (~i + 1)) before += conn_tree_.tree[i];
    std::int64_t r = std::int64_t(k) - before;
    for (PointId q : cloud_.at_pixel(pixel / cloud_.cols(), pixel % cloud_.cols()))
        if (is_connected(q) && r-- == 0) return q;
    throw NumericalError("connected point index bookkeeping is inconsistent");
}

std::pair<PointId, PointId> ChainState::merge_pair(std::size_t k) const {
    if (std::int64_t(k) >= pair_total_) throw ValidationError("merge pair index out of range");
    std::size_t pixel = pair_tree_.find(std::int64_t(k));
    std::int64_t before = 0;
    for (std::size_t i = pixel; i > 0; i -= i & (~i + 1)) before += pair_tree_.tree[i];
    std::int64_t r = std::int64_t(k) - before;
    auto px = cloud_.at_pixel(pixel / cloud_.cols(), pixel % cloud_.cols());
    for (std::size_t a = 0; a < px.size(); ++a)
        for (std::size_t b = a + 1; b < px.size(); ++b)
            if (mergeable(cloud_[px[a]], cloud_[px[b]]) && r-- == 0) return {px[a], px[b]};
    throw NumericalError("merge pair bookkeeping is inconsistent");
}

namespace {

// closed pieces of [lo, hi] left after removing open intervals (c - r, c + r)
void admissible_pieces(double lo, double hi, const std::vector<double>& centres, double r,
                       std::vector<std::pair<double, double>>& out) {
    if (lo > hi) return;
    std::vector<std::pair<double, double>> ex;
    for (double c : centres)
        if (c + r > lo && c - r < hi) ex.emplace_back(c - r, c + r);
    std::sort(ex.begin(), ex.end());
    double cur = lo;
    for (const auto& e : ex) {
        if (e.first > cur) out.emplace_back(cur, std::min(e.first, hi));
        cur = std::max(cur, e.second);
        if (cur >= hi) break;
    }
    if (cur < hi) out.emplace_back(cur, hi);
}

struct Piece {
    std::uint32_t x, y;
    double lo, hi;
};

void dilation_pieces(const PointCloud& cloud, const Point& donor, const ModelHyper& h, std::size_t bins,
                     std::vector<Piece>& out) {
    out.clear();
    std::vector<double> centres;
    std::vector<std::pair<double, double>> pieces;
    long R = long(cloud.rows()), C = long(cloud.cols());
    double lo = std::max(1.0, donor.t - h.n_b), hi = std::min(double(bins), donor.t + h.n_b);
    for (long dx = -1; dx <= 1; ++dx)
        for (long dy = -1; dy <= 1; ++dy) {
            if (dx == 0 && dy == 0) continue;
            long x = long(donor.x) + dx, y = long(donor.y) + dy;
            if (x < 0 || y < 0 || x >= R || y >= C) continue;
            centres.clear();
            for (PointId q : cloud.at_pixel(x, y)) centres.push_back(cloud[q].t);
            pieces.clear();
            admissible_pieces(lo, hi, centres, h.d_min, pieces);
            for (const auto& p : pieces) out.push_back({std::uint32_t(x), std::uint32_t(y), p.first, p.second});
        }
}

} // namespace

double ChainState::admissible_measure(PointId donor) const {
    std::vector<Piece> pieces;
    dilation_pieces(cloud_, cloud_[donor], setup_->hyper, setup_->cube->dims().bins, pieces);
    double a = 0.0;
    for (const auto& p : pieces) a += p.hi - p.lo;
    return a;
}

ChainState::Undo ChainState::apply(const Edit& edit) {
    Undo u;
    for (PointId id : edit.removed) {
        u.removed.emplace_back(id, cloud_[id]);
        cloud_.remove(id);
    }
    for (const auto& [id, p] : edit.modified) {
        u.modified.emplace_back(id, cloud_[id]);
        cloud_.replace(id, p);
    }
    for (const auto& p : edit.added) u.added_ids.push_back(cloud_.add(p));
    for (const auto& c : edit.background) {
        std::size_t f = bg_.index(c.i, c.j, c.l);
        u.background.emplace_back(f, bg_.at(f));
        bg_.at(f) = c.value;
    }
    return u;
}

void ChainState::undo(Undo& u) {
    for (auto it = u.background.rbegin(); it != u.background.rend(); ++it) bg_.at(it->first) = it->second;
    for (auto it = u.added_ids.rbegin(); it != u.added_ids.rend(); ++it) cloud_.remove(*it);
    for (auto it = u.modified.rbegin(); it != u.modified.rend(); ++it) cloud_.replace(it->first, it->second);
    for (auto it = u.removed.rbegin(); it != u.removed.rend(); ++it) {
        PointId id = cloud_.add(it->second);
        if (id != it->first) throw NumericalError("point id not restored by undo");
    }
}

bool ChainState::feasible_after(const Undo& u) const {
    const double T = double(setup_->cube->dims().bins);
    auto ok = [&](PointId id) {
        const Point& p = cloud_[id];
        if (!(p.t >= 1.0 && p.t <= T)) return false;
        for (double m : p.m)
            if (!std::isfinite(m)) return false;
        for (PointId q : cloud_.at_pixel(p.x, p.y))
            if (q != id && std::abs(cloud_[q].t - p.t) < setup_->hyper.d_min) return false;
        return true;
    };
    for (PointId id : u.added_ids)
        if (!ok(id)) return false;
    for (const auto& m : u.modified)
        if (!ok(m.first)) return false;
    for (const auto& b : u.background)
        if (!(bg_.at(b.first) > 0.0) || !std::isfinite(bg_.at(b.first))) return false;
    return true;
}

double ChainState::local_quadratic(const std::vector<PointId>& changed) const {
    const ModelHyper& h = setup_->hyper;
    const std::size_t L = cloud_.bands();
    double q = 0.0;
    std::vector<PointId> nb;
    for (PointId n : changed) {
        const Point& p = cloud_[n];
        for (std::size_t l = 0; l < L; ++l) q += h.beta * p.m[l] * p.m[l];
        collect_neighbors(cloud_, p.x, p.y, p.t, h, nb);
        for (PointId o : nb) {
            if (contains(changed, o) && o < n) continue;
            double w = 1.0 / distance(p, cloud_[o], h);
            for (std::size_t l = 0; l < L; ++l) {
                double dm = p.m[l] - cloud_[o].m[l];
                q += w * dm * dm;
            }
        }
    }
    return q;
}

namespace {

struct RegionEntry {
    std::size_t pixel;
    long lo, hi;
    bool operator<(const RegionEntry& o) const {
        return pixel != o.pixel ? pixel < o.pixel : (lo != o.lo ? lo < o.lo : hi < o.hi);
    }
};

void merge_intervals(std::vector<std::pair<long, long>>& iv) {
    if (iv.empty()) return;
    std::sort(iv.begin(), iv.end());
    std::size_t k = 0;
    for (std::size_t i = 1; i < iv.size(); ++i) {
        if (iv[i].first <= iv[k].second + 1)
            iv[k].second = std::max(iv[k].second, iv[i].second);
        else
            iv[++k] = iv[i];
    }
    iv.resize(k + 1);
}

} // namespace

// voxels of the region (sorted entries) covered by some interaction box of the current cloud
static std::size_t covered_in_region(const PointCloud& cloud, const std::vector<RegionEntry>& region,
                                     const ModelHyper& h, std::size_t bins) {
    std::size_t total = 0;
    std::vector<std::pair<long, long>> reg, cov;
    long R = long(cloud.rows()), C = long(cloud.cols());
    for (std::size_t a = 0; a < region.size();) {
        std::size_t pixel = region[a].pixel;
        reg.clear();
        for (; a < region.size() && region[a].pixel == pixel; ++a) reg.emplace_back(region[a].lo, region[a].hi);
        merge_intervals(reg);
        long x = long(pixel) / C, y = long(pixel) % C;
        cov.clear();
        for (long xx = std::max(0L, x - 1); xx <= std::min(R - 1, x + 1); ++xx)
            for (long yy = std::max(0L, y - 1); yy <= std::min(C - 1, y + 1); ++yy)
                for (PointId q : cloud.at_pixel(xx, yy)) {
                    long tc = std::lround(cloud[q].t);
                    long t0 = std::max<long>(1, tc - h.n_b), t1 = std::min<long>(long(bins), tc + h.n_b);
                    if (t0 <= t1) cov.emplace_back(t0, t1);
                }
        merge_intervals(cov);
        std::size_t i = 0, j = 0;
        while (i < reg.size() && j < cov.size()) {
            long lo = std::max(reg[i].first, cov[j].first), hi = std::min(reg[i].second, cov[j].second);
            if (lo <= hi) total += std::size_t(hi - lo + 1);
            if (reg[i].second < cov[j].second) ++i; else ++j;
        }
    }
    return total;
}

void ChainState::window(const std::vector<PointId>& changed, std::vector<PointId>& unchanged_out, bool& exhausted,
                        const std::vector<std::uint8_t>& changed_mask) const {
    (void)changed_mask;
    const int radius = setup_->logdet_radius;
    std::vector<PointId> frontier = changed, next, nb;
    std::vector<PointId> seen = changed;
    exhausted = true;
    for (int depth = 0; !frontier.empty(); ++depth) {
        next.clear();
        for (PointId n : frontier) {
            const Point& p = cloud_[n];
            collect_neighbors(cloud_, p.x, p.y, p.t, setup_->hyper, nb);
            for (PointId o : nb) {
                if (contains(seen, o)) continue;
                if (radius > 0 && depth >= radius) {
                    exhausted = false;
                    continue;
                }
                seen.push_back(o);
                next.push_back(o);
                unchanged_out.push_back(o);
            }
        }
        frontier.swap(next);
    }
}

double ChainState::window_logdet(const std::vector<PointId>& nodes) const {
    if (nodes.empty()) return 0.0;
    const ModelHyper& h = setup_->hyper;
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<PointId> nb;
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        const Point& p = cloud_[nodes[a]];
        collect_neighbors(cloud_, p.x, p.y, p.t, h, nb);
        double diag = h.beta;
        for (PointId o : nb) {
            double w = 1.0 / distance(p, cloud_[o], h);
            diag += w;
            auto it = std::find(nodes.begin(), nodes.end(), o);
            if (it != nodes.end()) trip.emplace_back(int(a), int(it - nodes.begin()), -w);
        }
        trip.emplace_back(int(a), int(a), diag);
    }
    Eigen::SparseMatrix<double> P(long(nodes.size()), long(nodes.size()));
    P.setFromTriplets(trip.begin(), trip.end());
    return log_det_spd(P);
}

EditAssessment ChainState::assess(const Edit& edit, const std::function<void(const ChainState&)>& after_hook) {
    const auto& d = setup_->cube->dims();
    const ModelHyper& h = setup_->hyper;
    const std::size_t L = d.bands;
    const long R = long(d.rows), C = long(d.cols);

    // pixels whose histograms change, and pixels holding changed points
    std::vector<std::size_t> lik_pixels, point_pixels;
    std::vector<PointId> changed_before;
    std::vector<RegionEntry> region;
    auto add_box = [&](std::uint32_t x, std::uint32_t y, double t) {
        VoxelBox b = interaction_box(x, y, t, d.rows, d.cols, d.bins, h.n_b);
        if (b.t0 > b.t1) return;
        for (long xx = b.x0; xx <= b.x1; ++xx)
            for (long yy = b.y0; yy <= b.y1; ++yy) region.push_back({std::size_t(xx * C + yy), b.t0, b.t1});
    };
    for (PointId id : edit.removed) {
        const Point& p = cloud_[id];
        point_pixels.push_back(p.x * C + p.y);
        changed_before.push_back(id);
        add_box(p.x, p.y, p.t);
    }
    bool positions_change = !edit.removed.empty() || !edit.added.empty();
    for (const auto& [id, np] : edit.modified) {
        const Point& p = cloud_[id];
        point_pixels.push_back(p.x * C + p.y);
        changed_before.push_back(id);
        if (np.t != p.t) {
            positions_change = true;
            add_box(p.x, p.y, p.t);
            add_box(np.x, np.y, np.t);
        }
    }
    for (const auto& p : edit.added) {
        if (p.x >= d.rows || p.y >= d.cols) return {};
        point_pixels.push_back(p.x * C + p.y);
        add_box(p.x, p.y, p.t);
    }
    lik_pixels = point_pixels;
    for (const auto& c : edit.background) lik_pixels.push_back(c.i * C + c.j);
    std::sort(lik_pixels.begin(), lik_pixels.end());
    lik_pixels.erase(std::unique(lik_pixels.begin(), lik_pixels.end()), lik_pixels.end());
    std::sort(point_pixels.begin(), point_pixels.end());
    point_pixels.erase(std::unique(point_pixels.begin(), point_pixels.end()), point_pixels.end());
    std::sort(region.begin(), region.end());

    std::vector<std::size_t> conn_pixels;
    for (std::size_t p : point_pixels) {
        long x = long(p) / C, y = long(p) % C;
        for (long xx = std::max(0L, x - 1); xx <= std::min(R - 1, x + 1); ++xx)
            for (long yy = std::max(0L, y - 1); yy <= std::min(C - 1, y + 1); ++yy)
                conn_pixels.push_back(std::size_t(xx * C + yy));
    }
    std::sort(conn_pixels.begin(), conn_pixels.end());
    conn_pixels.erase(std::unique(conn_pixels.begin(), conn_pixels.end()), conn_pixels.end());

    // before
    double ll_before = 0.0;
    for (std::size_t p : lik_pixels)
        for (std::size_t l = 0; l < L; ++l) ll_before += loglik_[p * L + l];
    double bgp_before = 0.0;
    for (const auto& c : edit.background) {
        std::size_t f = bg_.index(c.i, c.j, c.l);
        bgp_before += gamma_log_density(bg_.at(f), setup_->prior.shape.at(f), setup_->prior.scale.at(f));
    }
    double q_before = local_quadratic(changed_before);
    std::size_t area_before = covered_in_region(cloud_, region, h, d.bins);
    std::int64_t conn_before = 0, pairs_before = 0;
    for (std::size_t p : conn_pixels) conn_before += conn_[p];
    for (std::size_t p : point_pixels) pairs_before += pairs_[p];
    std::vector<PointId> unchanged;
    bool exhausted_before = true, exhausted_after = true;
    std::vector<std::uint8_t> none;
    if (positions_change) window(changed_before, unchanged, exhausted_before, none);

    // after
    Undo u = apply(edit);
    EditAssessment out;
    if (!feasible_after(u)) {
        undo(u);
        out.feasible = false;
        out.delta = kNegInf;
        return out;
    }
    std::vector<PointId> changed_after = u.added_ids;
    for (const auto& m : u.modified) changed_after.push_back(m.first);
    double ll_after = 0.0;
    for (std::size_t p : lik_pixels)
        for (std::size_t l = 0; l < L; ++l)
            ll_after += pixel_band_loglik(*setup_->cube, cloud_, bg_.at(p * L + l), setup_->mask->at(p * L + l),
                                          *setup_->irf, p / C, p % C, l);
    double bgp_after = 0.0;
    for (const auto& c : edit.background) {
        std::size_t f = bg_.index(c.i, c.j, c.l);
        bgp_after += gamma_log_density(bg_.at(f), setup_->prior.shape.at(f), setup_->prior.scale.at(f));
    }
    double q_after = local_quadratic(changed_after);
    std::size_t area_after = covered_in_region(cloud_, region, h, d.bins);
    std::int64_t conn_after = 0, pairs_after = 0;
    for (std::size_t p : conn_pixels) conn_after += count_connected(p);
    for (std::size_t p : point_pixels) pairs_after += count_pairs(p);
    double ld_after = 0.0, ld_before = 0.0;
    std::vector<PointId> nodes;
    if (positions_change) {
        window(changed_after, unchanged, exhausted_after, none);
        std::sort(unchanged.begin(), unchanged.end());
        unchanged.erase(std::unique(unchanged.begin(), unchanged.end()), unchanged.end());
        nodes = unchanged;
        nodes.insert(nodes.end(), changed_after.begin(), changed_after.end());
        ld_after = window_logdet(nodes);
    }
    if (after_hook) after_hook(*this);
    undo(u);
    if (positions_change) {
        nodes = unchanged;
        nodes.insert(nodes.end(), changed_before.begin(), changed_before.end());
        ld_before = window_logdet(nodes);
    }

    const double dn = double(edit.added.size()) - double(edit.removed.size());
    out.feasible = true;
    out.delta = (ll_after - ll_before) + (bgp_after - bgp_before) - 0.5 * (q_after - q_before) / h.sigma2 +
                0.5 * double(L) * (ld_after - ld_before) -
                dn * 0.5 * double(L) * std::log(2.0 * std::numbers::pi * h.sigma2) + dn * std::log(h.lambda_a) -
                h.voxel_measure * (double(area_after) - double(area_before)) * std::log(h.gamma_a);
    if (std::isnan(out.delta)) out.delta = kNegInf;
    out.connected_after = std::size_t(conn_total_ - conn_before + conn_after);
    out.pairs_after = std::size_t(pair_total_ - pairs_before + pairs_after);
    out.logdet_exact = exhausted_before && exhausted_after;
    return out;
}

std::vector<PointId> ChainState::commit(const Edit& edit) {
    const auto& d = setup_->cube->dims();
    const std::size_t L = d.bands;
    const long R = long(d.rows), C = long(d.cols);
    std::vector<std::size_t> point_pixels, lik_pixels;
    for (PointId id : edit.removed) point_pixels.push_back(cloud_[id].x * C + cloud_[id].y);
    for (const auto& m : edit.modified) point_pixels.push_back(cloud_[m.first].x * C + cloud_[m.first].y);
    for (const auto& p : edit.added) point_pixels.push_back(p.x * C + p.y);
    Undo u = apply(edit);
    lik_pixels = point_pixels;
    for (const auto& c : edit.background) lik_pixels.push_back(c.i * C + c.j);
    std::sort(lik_pixels.begin(), lik_pixels.end());
    lik_pixels.erase(std::unique(lik_pixels.begin(), lik_pixels.end()), lik_pixels.end());
    for (std::size_t p : lik_pixels)
        for (std::size_t l = 0; l < L; ++l) {
            double v = pixel_band_loglik(*setup_->cube, cloud_, bg_.at(p * L + l), setup_->mask->at(p * L + l),
                                         *setup_->irf, p / C, p % C, l);
            loglik_total_ += v - loglik_[p * L + l];
            loglik_[p * L + l] = v;
        }
    std::sort(point_pixels.begin(), point_pixels.end());
    point_pixels.erase(std::unique(point_pixels.begin(), point_pixels.end()), point_pixels.end());
    std::vector<std::size_t> conn_pixels;
    for (std::size_t p : point_pixels) {
        long x = long(p) / C, y = long(p) % C;
        for (long xx = std::max(0L, x - 1); xx <= std::min(R - 1, x + 1); ++xx)
            for (long yy = std::max(0L, y - 1); yy <= std::min(C - 1, y + 1); ++yy)
                conn_pixels.push_back(std::size_t(xx * C + yy));
        std::int64_t n = count_pairs(p);
        pair_tree_.add(p, n - pairs_[p]);
        pair_total_ += n - pairs_[p];
        pairs_[p] = n;
    }
    std::sort(conn_pixels.begin(), conn_pixels.end());
    conn_pixels.erase(std::unique(conn_pixels.begin(), conn_pixels.end()), conn_pixels.end());
    for (std::size_t p : conn_pixels) {
        std::int64_t n = count_connected(p);
        conn_tree_.add(p, n - conn_[p]);
        conn_total_ += n - conn_[p];
        conn_[p] = n;
    }
    return u.added_ids;
}

void ChainState::gibbs_sweep(Rng& rng) {
    gibbs_background_step(*setup_->cube, cloud_, bg_, setup_->prior, *setup_->mask, *setup_->irf, rng);
    replace_background(bg_);
}

void ChainState::replace_background(const BackgroundField& bg) {
    if (!bg.same_shape(bg_)) throw ValidationError("background shape mismatch");
    if (&bg != &bg_) bg_ = bg;
    const auto& d = setup_->cube->dims();
    loglik_total_ = 0.0;
    for (std::size_t f = 0; f < loglik_.size(); ++f) {
        std::size_t p = f / d.bands, l = f % d.bands;
        loglik_[f] = pixel_band_loglik(*setup_->cube, cloud_, bg_.at(f), setup_->mask->at(f), *setup_->irf,
                                       p / d.cols, p % d.cols, l);
        loglik_total_ += loglik_[f];
    }
}

double ChainState::full_log_posterior() const {
    return log_posterior(*setup_->cube, *setup_->mask, *setup_->irf, cloud_, bg_, setup_->prior, setup_->hyper);
}

double ChainState::cache_discrepancy() const {
    const auto& d = setup_->cube->dims();
    double worst = 0.0, total = 0.0;
    for (std::size_t f = 0; f < loglik_.size(); ++f) {
        std::size_t p = f / d.bands, l = f % d.bands;
        double v = pixel_band_loglik(*setup_->cube, cloud_, bg_.at(f), setup_->mask->at(f), *setup_->irf,
                                     p / d.cols, p % d.cols, l);
        total += v;
        worst = std::max(worst, std::abs(v - loglik_[f]) / std::max(1.0, std::abs(v)));
    }
    worst = std::max(worst, std::abs(total - loglik_total_) / std::max(1.0, std::abs(total)));
    std::int64_t ct = 0, pt = 0;
    for (std::size_t p = 0; p < d.pixels(); ++p) {
        std::int64_t c = count_connected(p), q = count_pairs(p);
        ct += c;
        pt += q;
        worst = std::max(worst, double(std::abs(c - conn_[p]) + std::abs(q - pairs_[p])));
    }
    worst = std::max(worst, double(std::abs(ct - conn_total_) + std::abs(pt - pair_total_)));
    return worst;
}

// ---------------------------------------------------------------------------------------------
// move kernels

namespace {

double log_p(const ChainState& s, MoveKind k) { return std::log(s.setup().moves.probability(k)); }

void finish(Proposal& pr, const EditAssessment& a) {
    pr.delta_log_posterior = a.delta;
    pr.log_ratio = a.feasible ? a.delta + pr.log_proposal : kNegInf;
    if (std::isnan(pr.log_ratio)) pr.log_ratio = kNegInf;
}

// edit shared by birth and dilation: new point plus background split
Edit birth_edit(const ChainState& s, std::uint32_t x, std::uint32_t y, double t, const std::vector<double>& u) {
    const auto& setup = s.setup();
    const double T = double(setup.cube->dims().bins);
    Edit e;
    Point p{x, y, t, std::vector<double>(u.size())};
    for (std::size_t l = 0; l < u.size(); ++l) {
        double b = s.background()(x, y, l);
        p.m[l] = std::log(setup.sbr[l] * (1.0 - u[l]) * b * T / setup.irf->sum(l));
        e.background.push_back({x, y, l, u[l] * b});
    }
    e.added.push_back(std::move(p));
    return e;
}

// edit shared by death and erosion; log_one_minus_u receives sum of log(1 - u) of the reverse birth
Edit death_edit(const ChainState& s, PointId id, double& log_one_minus_u) {
    const auto& setup = s.setup();
    const double T = double(setup.cube->dims().bins);
    const Point& p = s.cloud()[id];
    Edit e;
    e.removed.push_back(id);
    log_one_minus_u = 0.0;
    for (std::size_t l = 0; l < p.m.size(); ++l) {
        double b = s.background()(p.x, p.y, l);
        double add = std::exp(p.m[l]) * setup.irf->sum(l) / (setup.sbr[l] * T);
        double nb = b + add;
        e.background.push_back({p.x, p.y, l, nb});
        log_one_minus_u += std::log(add) - std::log(nb);
    }
    return e;
}

bool valid_u(const std::vector<double>& u, std::size_t L) {
    if (u.size() != L) return false;
    for (double v : u)
        if (!in_open_unit(v)) return false;
    return true;
}

} // namespace

double dilation_density(const ChainState& s, std::uint32_t x, std::uint32_t y, double t) {
    const auto& setup = s.setup();
    const auto& cloud = s.cloud();
    const double T = double(setup.cube->dims().bins);
    if (cloud.empty() || !(t >= 1.0 && t <= T)) return 0.0;
    for (PointId q : cloud.at_pixel(x, y))
        if (std::abs(cloud[q].t - t) < setup.hyper.d_min) return 0.0;
    std::vector<PointId> donors;
    collect_neighbors(cloud, x, y, t, setup.hyper, donors);
    double q = 0.0;
    for (PointId d : donors) {
        double a = s.admissible_measure(d);
        if (a > 0) q += 1.0 / a;
    }
    return q / double(cloud.size());
}

Proposal propose_birth(ChainState& s, const BirthAux& a) {
    Proposal pr;
    pr.kind = MoveKind::birth;
    const auto& d = s.setup().cube->dims();
    if (a.x >= d.rows || a.y >= d.cols || !valid_u(a.u, d.bands)) return pr;
    pr.valid = true;
    pr.edit = birth_edit(s, a.x, a.y, a.t, a.u);
    double jac = 0.0;
    for (double u : a.u) jac -= std::log1p(-u);
    pr.log_proposal = log_p(s, MoveKind::death) - std::log(double(s.cloud().size() + 1)) -
                      log_p(s, MoveKind::birth) + jac;
    finish(pr, s.assess(pr.edit));
    return pr;
}

Proposal propose_death(ChainState& s, const DeathAux& a) {
    Proposal pr;
    pr.kind = MoveKind::death;
    if (!s.cloud().alive(a.id)) return pr;
    pr.valid = true;
    double log_omu = 0.0;
    pr.edit = death_edit(s, a.id, log_omu);
    pr.log_proposal = log_p(s, MoveKind::birth) - log_p(s, MoveKind::death) +
                      std::log(double(s.cloud().size())) + log_omu;
    finish(pr, s.assess(pr.edit));
    return pr;
}

Proposal propose_dilation(ChainState& s, const DilationAux& a) {
    Proposal pr;
    pr.kind = MoveKind::dilation;
    const auto& d = s.setup().cube->dims();
    if (s.cloud().empty() || a.x >= d.rows || a.y >= d.cols || !valid_u(a.u, d.bands)) return pr;
    pr.valid = true;
    double q = dilation_density(s, a.x, a.y, a.t);
    pr.edit = birth_edit(s, a.x, a.y, a.t, a.u);
    if (!(q > 0)) return pr;
    double jac = 0.0;
    for (double u : a.u) jac -= std::log1p(-u);
    EditAssessment as = s.assess(pr.edit);
    pr.log_proposal = log_p(s, MoveKind::erosion) - std::log(double(as.connected_after)) -
                      log_p(s, MoveKind::dilation) - std::log(s.volume()) - std::log(q) + jac;
    finish(pr, as);
    return pr;
}

Proposal propose_erosion(ChainState& s, const ErosionAux& a) {
    Proposal pr;
    pr.kind = MoveKind::erosion;
    if (!s.cloud().alive(a.id) || !s.is_connected(a.id)) return pr;
    pr.valid = true;
    double log_omu = 0.0;
    pr.edit = death_edit(s, a.id, log_omu);
    const Point p = s.cloud()[a.id];
    double q_rev = 0.0;
    EditAssessment as = s.assess(pr.edit, [&](const ChainState& after) {
        q_rev = dilation_density(after, p.x, p.y, p.t);
    });
    pr.log_proposal = log_p(s, MoveKind::dilation) + std::log(s.volume()) + std::log(q_rev) -
                      log_p(s, MoveKind::erosion) + std::log(double(s.connected_count())) + log_omu;
    finish(pr, as);
    return pr;
}

Proposal propose_shift(ChainState& s, const ShiftAux& a) {
    Proposal pr;
    pr.kind = MoveKind::shift;
    if (!s.cloud().alive(a.id)) return pr;
    pr.valid = true;
    Point p = s.cloud()[a.id];
    p.t = a.t;
    pr.edit.modified.emplace_back(a.id, std::move(p));
    pr.log_proposal = 0.0;
    finish(pr, s.assess(pr.edit));
    return pr;
}

Proposal propose_mark(ChainState& s, const MarkAux& a) {
    Proposal pr;
    pr.kind = MoveKind::mark;
    const auto& setup = s.setup();
    if (!s.cloud().alive(a.id) || a.band >= setup.cube->dims().bands) return pr;
    pr.valid = true;
    Point p = s.cloud()[a.id];
    const double T = double(setup.cube->dims().bins);
    double b = s.background()(p.x, p.y, a.band);
    double nb = b + (std::exp(p.m[a.band]) - std::exp(a.m)) * setup.irf->sum(a.band) / (setup.sbr[a.band] * T);
    pr.edit.background.push_back({p.x, p.y, a.band, nb});
    p.m[a.band] = a.m;
    pr.edit.modified.emplace_back(a.id, std::move(p));
    pr.log_proposal = 0.0;
    finish(pr, s.assess(pr.edit));
    return pr;
}

std::pair<Point, Point> split_point(const Point& p, const std::vector<double>& u, double delta, bool flip) {
    double R = 0.0, A = 0.0, B = 0.0;
    for (std::size_t l = 0; l < p.m.size(); ++l) {
        double r = std::exp(p.m[l]);
        R += r;
        A += u[l] * r;
        B += (1.0 - u[l]) * r;
    }
    double sgn = flip ? -1.0 : 1.0;
    Point k1{p.x, p.y, p.t + sgn * delta * B / R, p.m};
    Point k2{p.x, p.y, p.t - sgn * delta * A / R, p.m};
    for (std::size_t l = 0; l < p.m.size(); ++l) {
        k1.m[l] = p.m[l] + std::log(u[l]);
        k2.m[l] = p.m[l] + std::log1p(-u[l]);
    }
    return {std::move(k1), std::move(k2)};
}

Point merge_points(const Point& a, const Point& b) {
    double A = 0.0, B = 0.0;
    Point out{a.x, a.y, 0.0, a.m};
    for (std::size_t l = 0; l < a.m.size(); ++l) {
        A += std::exp(a.m[l]);
        B += std::exp(b.m[l]);
        out.m[l] = log_sum_exp2(a.m[l], b.m[l]);
    }
    out.t = (A * a.t + B * b.t) / (A + B);
    return out;
}

SplitAux split_inverse_aux(const Point& a, const Point& b) {
    SplitAux s{0, std::vector<double>(a.m.size()), std::abs(a.t - b.t), a.t < b.t};
    for (std::size_t l = 0; l < a.m.size(); ++l) s.u[l] = 1.0 / (1.0 + std::exp(b.m[l] - a.m[l]));
    return s;
}

Proposal propose_split(ChainState& s, const SplitAux& a) {
    Proposal pr;
    pr.kind = MoveKind::split;
    const auto& setup = s.setup();
    const double Lh = double(setup.irf->max_support()), dmin = setup.hyper.d_min;
    if (!s.cloud().alive(a.id) || !(Lh > dmin) || !valid_u(a.u, setup.cube->dims().bands) ||
        !(a.delta > dmin && a.delta < Lh))
        return pr;
    pr.valid = true;
    auto [k1, k2] = split_point(s.cloud()[a.id], a.u, a.delta, a.flip);
    pr.edit.removed.push_back(a.id);
    pr.edit.added.push_back(std::move(k1));
    pr.edit.added.push_back(std::move(k2));
    EditAssessment as = s.assess(pr.edit);
    double lq = 0.0, jac = 0.0;
    for (double u : a.u) {
        lq += log_beta_density(u, setup.scales.split_eta);
        jac -= std::log(u) + std::log1p(-u);
    }
    pr.log_proposal = log_p(s, MoveKind::merge) - std::log(double(as.pairs_after)) - log_p(s, MoveKind::split) +
                      std::log(double(s.cloud().size())) - lq + std::log(Lh - dmin) - std::log(s.volume()) + jac;
    finish(pr, as);
    return pr;
}

Proposal propose_merge(ChainState& s, const MergeAux& a) {
    Proposal pr;
    pr.kind = MoveKind::merge;
    const auto& setup = s.setup();
    const auto& cloud = s.cloud();
    const double Lh = double(setup.irf->max_support()), dmin = setup.hyper.d_min;
    if (a.first == a.second || !cloud.alive(a.first) || !cloud.alive(a.second) ||
        !s.mergeable(cloud[a.first], cloud[a.second]))
        return pr;
    pr.valid = true;
    SplitAux inv = split_inverse_aux(cloud[a.first], cloud[a.second]);
    pr.edit.removed = {a.first, a.second};
    pr.edit.added.push_back(merge_points(cloud[a.first], cloud[a.second]));
    double lq = 0.0, jac = 0.0;
    for (double u : inv.u) {
        lq += log_beta_density(u, setup.scales.split_eta);
        jac += std::log(u) + std::log1p(-u);
    }
    pr.log_proposal = log_p(s, MoveKind::split) - std::log(double(cloud.size() - 1)) + lq - std::log(Lh - dmin) -
                      log_p(s, MoveKind::merge) + std::log(double(s.merge_pair_count())) + std::log(s.volume()) +
                      jac;
    finish(pr, s.assess(pr.edit));
    return pr;
}

// ---------------------------------------------------------------------------------------------
// auxiliary draws

std::optional<BirthAux> draw_birth(const ChainState& s, Rng& rng) {
    const auto& d = s.setup().cube->dims();
    BirthAux a;
    a.x = std::uint32_t(std::uniform_int_distribution<std::size_t>(0, d.rows - 1)(rng));
    a.y = std::uint32_t(std::uniform_int_distribution<std::size_t>(0, d.cols - 1)(rng));
    a.t = std::uniform_real_distribution<double>(1.0, double(d.bins))(rng);
    a.u.resize(d.bands);
    for (double& u : a.u) u = uniform_open(rng);
    return a;
}

std::optional<DeathAux> draw_death(const ChainState& s, Rng& rng) {
    const auto ids = s.cloud().ids();
    if (ids.empty()) return std::nullopt;
    return DeathAux{ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)]};
}

std::optional<DilationAux> draw_dilation(const ChainState& s, Rng& rng) {
    const auto ids = s.cloud().ids();
    if (ids.empty()) return std::nullopt;
    PointId donor = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
    std::vector<Piece> pieces;
    dilation_pieces(s.cloud(), s.cloud()[donor], s.setup().hyper, s.setup().cube->dims().bins, pieces);
    double total = 0.0;
    for (const auto& p : pieces) total += p.hi - p.lo;
    if (!(total > 0)) return std::nullopt;
    double r = uniform01(rng) * total;
    const Piece* chosen = &pieces.back();
    for (const auto& p : pieces) {
        if (r < p.hi - p.lo) {
            chosen = &p;
            break;
        }
        r -= p.hi - p.lo;
    }
    DilationAux a;
    a.x = chosen->x;
    a.y = chosen->y;
    a.t = std::min(chosen->hi, chosen->lo + r);
    a.u.resize(s.setup().cube->dims().bands);
    for (double& u : a.u) u = uniform_open(rng);
    return a;
}

std::optional<ErosionAux> draw_erosion(const ChainState& s, Rng& rng) {
    std::size_t c = s.connected_count();
    if (c == 0) return std::nullopt;
    return ErosionAux{s.connected_point(std::uniform_int_distribution<std::size_t>(0, c - 1)(rng))};
}

std::optional<ShiftAux> draw_shift(const ChainState& s, Rng& rng) {
    auto d = draw_death(s, rng);
    if (!d) return std::nullopt;
    std::normal_distribution<double> n(0.0, std::sqrt(s.setup().scales.shift_variance));
    return ShiftAux{d->id, s.cloud()[d->id].t + n(rng)};
}

std::optional<SplitAux> draw_split(const ChainState& s, Rng& rng) {
    const auto& setup = s.setup();
    const double Lh = double(setup.irf->max_support()), dmin = setup.hyper.d_min;
    if (!(Lh > dmin)) return std::nullopt;
    auto d = draw_death(s, rng);
    if (!d) return std::nullopt;
    SplitAux a;
    a.id = d->id;
    a.u.resize(setup.cube->dims().bands);
    for (double& u : a.u) {
        do {
            u = beta_draw(rng, setup.scales.split_eta, setup.scales.split_eta);
        } while (!in_open_unit(u));
    }
    do {
        a.delta = std::uniform_real_distribution<double>(dmin, Lh)(rng);
    } while (!(a.delta > dmin));
    a.flip = std::bernoulli_distribution(0.5)(rng);
    return a;
}

std::optional<MergeAux> draw_merge(const ChainState& s, Rng& rng) {
    std::size_t m = s.merge_pair_count();
    if (m == 0) return std::nullopt;
    auto pr = s.merge_pair(std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
    return MergeAux{pr.first, pr.second};
}

} // namespace msl
