#pragma once

#include <optional>
#include <string>
#include <vector>

#include "csplat/image.hpp"

namespace csplat {

// nullopt means MSE == 0 ("identical").
std::optional<double> psnr(const Image& pred, const Image& gt, double peak = 1.0);

// Mean windowed SSIM; identically 1 - 2*dssim_loss.
double ssim(const Image& pred, const Image& gt);

struct MetricEntry {
    int view = 0;
    int frame = 0;
    std::optional<double> psnr;  // nullopt: identical images
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<MetricEntry> entries;
    std::optional<double> mean_psnr;  // over non-identical pairs; nullopt if all identical
    double mean_ssim = 0.0;
    std::vector<double> per_view_ssim;
    std::vector<double> per_frame_ssim;

    std::string to_json() const;
    std::string to_table() const;
};

MetricReport evaluate_grid(const std::vector<std::vector<Image>>& pred,
                           const std::vector<std::vector<Image>>& gt);

}  // namespace csplat
