#include "msl/codes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msl/errors.hpp"
#include "msl/random.hpp"

namespace msl {

void CodeDesignSpec::validate() const {
    if (rows == 0 || cols == 0 || bands == 0) throw ValidationError("mask dimensions must be positive");
    if (w < 1 || w > bands) throw ValidationError("observed bands per pixel must lie in [1, bands]");
    if (radius < 0) throw ValidationError("window radius must be non-negative");
    std::size_t side = std::size_t(2 * radius + 1);
    if (!weights.empty()) {
        if (weights.size() != side * side) throw ValidationError("window weights do not match the radius");
        for (double v : weights)
            if (!(v >= 0)) throw ValidationError("window weights must be non-negative");
        if (!(weights[weights.size() / 2] > 0)) throw ValidationError("centre weight must be positive");
    }
}

std::vector<std::size_t> band_slices(std::size_t bands, std::size_t w) {
    if (w == 0 || w > bands) throw ValidationError("observed bands per pixel must lie in [1, bands]");
    std::vector<std::size_t> first(w + 1);
    for (std::size_t s = 0; s <= w; ++s) first[s] = s * bands / w;
    return first;
}

namespace {

class Windowed {
public:
    Windowed(std::size_t rows, std::size_t cols, std::size_t bands, int radius, const std::vector<double>& weights)
        : R_(long(rows)), C_(long(cols)), L_(bands), r_(radius), side_(2 * radius + 1),
          w_(weights.empty() ? std::vector<double>(std::size_t(side_ * side_), 1.0) : weights),
          norm_(rows * cols, 0.0), s_(rows * cols * bands, 0.0) {
        for (long i = 0; i < R_; ++i)
            for (long j = 0; j < C_; ++j) {
                double n = 0.0;
                for (long di = -r_; di <= r_; ++di)
                    for (long dj = -r_; dj <= r_; ++dj)
                        if (inside(i + di, j + dj)) n += weight(di, dj);
                norm_[std::size_t(i * C_ + j)] = n;
            }
    }

    // g(pi, pj, l) += sign
    void change(long pi, long pj, std::size_t l, double sign) {
        for (long di = -r_; di <= r_; ++di)
            for (long dj = -r_; dj <= r_; ++dj) {
                long i = pi - di, j = pj - dj;
                if (!inside(i, j)) continue;
                std::size_t p = std::size_t(i * C_ + j);
                double n = norm_[p];
                if (!(n > 0)) continue;
                double& s = s_[p * L_ + l];
                double d = sign * weight(di, dj) / n;
                s1_ += d;
                s2_ += 2.0 * s * d + d * d;
                s += d;
            }
    }

    double variance() const {
        double n = double(s_.size());
        return std::max(0.0, s2_ / n - (s1_ / n) * (s1_ / n));
    }

private:
    bool inside(long i, long j) const { return i >= 0 && j >= 0 && i < R_ && j < C_; }
    double weight(long di, long dj) const { return w_[std::size_t((di + r_) * side_ + (dj + r_))]; }

    long R_, C_;
    std::size_t L_;
    long r_, side_;
    std::vector<double> w_;
    std::vector<double> norm_;
    std::vector<double> s_;
    double s1_ = 0.0, s2_ = 0.0;
};

} // namespace

double local_variance(const SamplingMask& mask, int radius, const std::vector<double>& weights) {
    CodeDesignSpec check{mask.rows(), mask.cols(), mask.bands(), 1, radius, weights};
    check.validate();
    // two-pass evaluation, independent of the incremental bookkeeping
    const long R = long(mask.rows()), C = long(mask.cols()), r = radius, side = 2 * radius + 1;
    auto wt = [&](long di, long dj) {
        return weights.empty() ? 1.0 : weights[std::size_t((di + r) * side + (dj + r))];
    };
    std::vector<double> vals;
    vals.reserve(mask.rows() * mask.cols() * mask.bands());
    for (long i = 0; i < R; ++i)
        for (long j = 0; j < C; ++j)
            for (std::size_t l = 0; l < mask.bands(); ++l) {
                double num = 0.0, den = 0.0;
                for (long di = -r; di <= r; ++di)
                    for (long dj = -r; dj <= r; ++dj) {
                        long a = i + di, b = j + dj;
                        if (a < 0 || b < 0 || a >= R || b >= C) continue;
                        den += wt(di, dj);
                        num += wt(di, dj) * (mask(std::size_t(a), std::size_t(b), l) ? 1.0 : 0.0);
                    }
                vals.push_back(den > 0 ? num / den : 0.0);
            }
    double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / double(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    return var / double(vals.size());
}

DesignedMask design_blue_noise(const CodeDesignSpec& spec) {
    spec.validate();
    const auto first = band_slices(spec.bands, spec.w);
    const std::size_t P = spec.rows * spec.cols, S = spec.w;
    const long C = long(spec.cols);
    Rng rng = make_rng(spec.seed, 0x6d61736b);
    Windowed win(spec.rows, spec.cols, spec.bands, spec.radius, spec.weights);
    std::vector<std::size_t> choice(P * S, 0);

    auto set_band = [&](std::size_t p, std::size_t s, std::size_t l) {
        win.change(long(p) / C, long(p) % C, choice[p * S + s], -1.0);
        win.change(long(p) / C, long(p) % C, l, +1.0);
        choice[p * S + s] = l;
    };

    // greedy initialisation in random pixel order
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t p : order)
        for (std::size_t s = 0; s < S; ++s) {
            std::size_t best = first[s];
            double best_v = 0.0;
            for (std::size_t l = first[s]; l < first[s + 1]; ++l) {
                win.change(long(p) / C, long(p) % C, l, +1.0);
                double v = win.variance();
                win.change(long(p) / C, long(p) % C, l, -1.0);
                if (l == first[s] || v < best_v) {
                    best_v = v;
                    best = l;
                }
            }
            win.change(long(p) / C, long(p) % C, best, +1.0);
            choice[p * S + s] = best;
        }

    std::uniform_int_distribution<std::size_t> pick_pixel(0, P - 1), pick_slice(0, S - 1);
    auto random_move = [&](std::size_t& p, std::size_t& s, std::size_t& q) -> bool {
        s = pick_slice(rng);
        std::size_t width = first[s + 1] - first[s];
        if (width < 2) return false;
        p = pick_pixel(rng);
        if (uniform01(rng) < 0.5) {
            std::size_t l = first[s] + std::uniform_int_distribution<std::size_t>(0, width - 2)(rng);
            if (l >= choice[p * S + s]) ++l;
            q = P + l; // plain band change encoded past the pixel range
            return true;
        }
        long pi = long(p) / C, pj = long(p) % C;
        long r = std::max(1, spec.radius + 1);
        long qi = pi + std::uniform_int_distribution<long>(-r, r)(rng);
        long qj = pj + std::uniform_int_distribution<long>(-r, r)(rng);
        if (qi < 0 || qj < 0 || qi >= long(spec.rows) || qj >= C) return false;
        q = std::size_t(qi * C + qj);
        return q != p && choice[q * S + s] != choice[p * S + s];
    };
    auto apply_move = [&](std::size_t p, std::size_t s, std::size_t q) {
        if (q >= P) {
            std::size_t old = choice[p * S + s];
            set_band(p, s, q - P);
            return P + old; // inverse move
        }
        std::size_t a = choice[p * S + s], b = choice[q * S + s];
        set_band(p, s, b);
        set_band(q, s, a);
        return q;
    };

    // annealing
    const std::size_t steps = spec.sweeps * P * S;
    double cur = win.variance();
    double t0 = 0.0;
    {
        std::size_t n = 0;
        for (std::size_t k = 0; k < 200; ++k) {
            std::size_t p, s, q;
            if (!random_move(p, s, q)) continue;
            std::size_t inv = apply_move(p, s, q);
            t0 += std::abs(win.variance() - cur);
            apply_move(p, s, inv);
            ++n;
        }
        t0 = n ? t0 / double(n) : 0.0;
    }
    if (t0 > 0 && steps > 0) {
        const double t1 = t0 * 1e-4;
        const double cool = std::pow(t1 / t0, 1.0 / double(steps));
        double temp = t0;
        for (std::size_t k = 0; k < steps; ++k, temp *= cool) {
            std::size_t p, s, q;
            if (!random_move(p, s, q)) continue;
            std::size_t inv = apply_move(p, s, q);
            double v = win.variance();
            if (v <= cur || uniform01(rng) < std::exp((cur - v) / temp))
                cur = v;
            else
                apply_move(p, s, inv);
        }
    }

    // zero-temperature polish over single band changes
    for (int pass = 0; pass < 100; ++pass) {
        bool improved = false;
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t s = 0; s < S; ++s)
                for (std::size_t l = first[s]; l < first[s + 1]; ++l) {
                    std::size_t old = choice[p * S + s];
                    if (l == old) continue;
                    set_band(p, s, l);
                    double v = win.variance();
                    if (v < cur - 1e-15) {
                        cur = v;
                        improved = true;
                    } else {
                        set_band(p, s, old);
                    }
                }
        if (!improved) break;
    }

    DesignedMask out{SamplingMask(spec.rows, spec.cols, spec.bands, false), 0.0};
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t s = 0; s < S; ++s) out.mask.set(p / spec.cols, p % spec.cols, choice[p * S + s], true);
    out.objective = local_variance(out.mask, spec.radius, spec.weights);
    return out;
}

SamplingMask random_code_per_pixel(const CodeDesignSpec& spec) {
    spec.validate();
    Rng rng = make_rng(spec.seed, 0x70697865);
    SamplingMask m(spec.rows, spec.cols, spec.bands, false);
    std::vector<std::size_t> bands(spec.bands);
    for (std::size_t i = 0; i < spec.rows; ++i)
        for (std::size_t j = 0; j < spec.cols; ++j) {
            std::iota(bands.begin(), bands.end(), 0);
            std::shuffle(bands.begin(), bands.end(), rng);
            for (std::size_t k = 0; k < spec.w; ++k) m.set(i, j, bands[k], true);
        }
    return m;
}

SamplingMask random_code_per_band(const CodeDesignSpec& spec) {
    spec.validate();
    Rng rng = make_rng(spec.seed, 0x62616e64);
    SamplingMask m(spec.rows, spec.cols, spec.bands, false);
    const std::size_t P = spec.rows * spec.cols;
    const auto count = std::size_t(std::llround(double(P) * double(spec.w) / double(spec.bands)));
    std::vector<std::size_t> pixels(P);
    for (std::size_t l = 0; l < spec.bands; ++l) {
        std::iota(pixels.begin(), pixels.end(), 0);
        std::shuffle(pixels.begin(), pixels.end(), rng);
        for (std::size_t k = 0; k < count; ++k) m.set(pixels[k] / spec.cols, pixels[k] % spec.cols, l, true);
    }
    return m;
}

} // namespace msl
