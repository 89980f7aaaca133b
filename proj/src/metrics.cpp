#include "csplat/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "csplat/losses.hpp"
#include "json.hpp"

namespace csplat {

std::optional<double> psnr(const Image& pred, const Image& gt, double peak) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("image shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double d = pred.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= double(pred.data.size());
    if (mse == 0.0) return std::nullopt;
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& pred, const Image& gt) {
    return 1.0 - 2.0 * dssim_loss(pred, gt);
}

MetricReport evaluate_grid(const std::vector<std::vector<Image>>& pred,
                           const std::vector<std::vector<Image>>& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("view count mismatch");
    MetricReport report;
    const size_t views = pred.size();
    size_t frames = views ? pred[0].size() : 0;
    report.per_view_ssim.assign(views, 0.0);
    report.per_frame_ssim.assign(frames, 0.0);
    double psnr_sum = 0.0, ssim_sum = 0.0;
    size_t psnr_count = 0;
    for (size_t v = 0; v < views; ++v) {
        if (pred[v].size() != gt[v].size())
            throw std::invalid_argument("frame count mismatch at view " + std::to_string(v));
        for (size_t f = 0; f < pred[v].size(); ++f) {
            MetricEntry e;
            e.view = int(v);
            e.frame = int(f);
            e.psnr = psnr(pred[v][f], gt[v][f]);
            e.ssim = ssim(pred[v][f], gt[v][f]);
            if (e.psnr) {
                psnr_sum += *e.psnr;
                ++psnr_count;
            }
            ssim_sum += e.ssim;
            report.per_view_ssim[v] += e.ssim / double(frames);
            report.per_frame_ssim[f] += e.ssim / double(views);
            report.entries.push_back(e);
        }
    }
    if (psnr_count) report.mean_psnr = psnr_sum / double(psnr_count);
    if (!report.entries.empty()) report.mean_ssim = ssim_sum / double(report.entries.size());
    return report;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    for (const MetricEntry& e : entries) {
        nlohmann::json je{{"view", e.view}, {"frame", e.frame}, {"ssim", e.ssim}};
        if (e.psnr)
            je["psnr"] = *e.psnr;
        else
            je["psnr"] = "identical";
        j["entries"].push_back(je);
    }
    if (mean_psnr)
        j["mean_psnr"] = *mean_psnr;
    else
        j["mean_psnr"] = "identical";
    j["mean_ssim"] = mean_ssim;
    j["per_view_ssim"] = per_view_ssim;
    j["per_frame_ssim"] = per_frame_ssim;
    return j.dump(2);
}

std::string MetricReport::to_table() const {
    std::ostringstream out;
    out << "view frame     psnr    ssim\n";
    char line[80];
    for (const MetricEntry& e : entries) {
        if (e.psnr)
            std::snprintf(line, sizeof(line), "%4d %5d %8.3f %7.4f\n", e.view, e.frame, *e.psnr,
                          e.ssim);
        else
            std::snprintf(line, sizeof(line), "%4d %5d    ident %7.4f\n", e.view, e.frame, e.ssim);
        out << line;
    }
    if (mean_psnr)
        std::snprintf(line, sizeof(line), "mean       %8.3f %7.4f\n", *mean_psnr, mean_ssim);
    else
        std::snprintf(line, sizeof(line), "mean          ident %7.4f\n", mean_ssim);
    out << line;
    return out.str();
}

}  // namespace csplat
