#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include "msl/fields.hpp"
#include "msl/lidar_data.hpp"
#include "msl/model.hpp"

namespace msl {

// indices refer to the (x, y, t)-sorted point lists
struct Matching {
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // (est, gt)
    std::vector<std::size_t> false_est;
    std::vector<std::size_t> missed_gt;
    std::size_t n_est = 0;
    std::size_t n_gt = 0;
};

// Per pixel one-to-one matching under |dt| <= tau: most pairs first, then least total |dt|; ties keep lower t.
Matching match_points(const std::vector<Point>& est, const std::vector<Point>& gt, double tau);
Matching match_points(const PointCloud& est, const PointCloud& gt, double tau);

double f_true(const Matching& m);
std::size_t f_false(const Matching& m);

// Mean intensity absolute error per ground-truth point. Intensities are rescaled by each band's
// impulse-response sum so that the response has unit sum.
double iae(const Matching& m, const std::vector<Point>& est, const std::vector<Point>& gt, const ImpulseResponse& irf);

double nmse_b(const BackgroundField& est, const BackgroundField& truth);

double depth_mae(const Matching& m, const std::vector<Point>& est, const std::vector<Point>& gt);

struct EvalReport {
    std::vector<double> tau;
    std::vector<double> f_true;
    std::vector<std::size_t> f_false;
    std::vector<double> iae;
    double nmse_b = 0.0; // NaN when no background was compared
    double depth_mae = 0.0;
    double depth_tau = 3.0;
    std::size_t n_est = 0, n_gt = 0;
};

// bg arguments may be null
EvalReport evaluate(const PointCloud& est, const PointCloud& gt, const ImpulseResponse& irf,
                    const std::vector<double>& taus, const BackgroundField* bg_est = nullptr,
                    const BackgroundField* bg_true = nullptr, double depth_tau = 3.0);

void write_report_csv(std::ostream& os, const EvalReport& r);
void write_report_summary(std::ostream& os, const EvalReport& r);

} // namespace msl
