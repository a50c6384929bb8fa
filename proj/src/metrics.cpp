#include "vmf/metrics.hpp"

#include <cmath>

namespace vmf {

namespace {

void check_2d(const FlowField2D& pred, const FlowField2D& gt, const Image& mask) {
    if (pred.width != gt.width || pred.height != gt.height) throw InputError("metrics: flow shapes differ");
    if (mask.width != pred.width || mask.height != pred.height || mask.channels != 1)
        throw InputError("metrics: mask shape differs");
}

}  // namespace

double metric_epe(const FlowField2D& pred, const FlowField2D& gt, const Image& mask) {
    check_2d(pred, gt, mask);
    std::vector<double> errs;
    for (std::size_t i = 0; i < pred.du.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        errs.push_back(std::hypot(pred.du[i] - gt.du[i], pred.dv[i] - gt.dv[i]));
    }
    if (errs.empty()) throw InputError("metric_epe: empty mask");
    return pairwise_sum(errs) / static_cast<double>(errs.size());
}

double metric_acc(const FlowField2D& pred, const FlowField2D& gt, const Image& mask, double threshold_px) {
    check_2d(pred, gt, mask);
    std::size_t count = 0, hit = 0;
    for (std::size_t i = 0; i < pred.du.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        ++count;
        if (std::hypot(pred.du[i] - gt.du[i], pred.dv[i] - gt.dv[i]) < threshold_px) ++hit;
    }
    if (count == 0) throw InputError("metric_acc: empty mask");
    return 100.0 * static_cast<double>(hit) / static_cast<double>(count);
}

double metric_epe(const FlowField3D& pred, const std::vector<Vec3>& gt, const std::vector<std::uint8_t>& mask) {
    if (pred.size() != gt.size() || pred.size() != mask.size()) throw InputError("metrics: 3D sizes differ");
    std::vector<double> errs;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        errs.push_back((pred.flow[i] - gt[i]).norm());
    }
    if (errs.empty()) throw InputError("metric_epe: empty mask");
    return pairwise_sum(errs) / static_cast<double>(errs.size());
}

double metric_acc(const FlowField3D& pred, const std::vector<Vec3>& gt, const std::vector<std::uint8_t>& mask,
                  double threshold_m) {
    if (pred.size() != gt.size() || pred.size() != mask.size()) throw InputError("metrics: 3D sizes differ");
    std::size_t count = 0, hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        ++count;
        if ((pred.flow[i] - gt[i]).norm() < threshold_m) ++hit;
    }
    if (count == 0) throw InputError("metric_acc: empty mask");
    return 100.0 * static_cast<double>(hit) / static_cast<double>(count);
}

}  // namespace vmf
