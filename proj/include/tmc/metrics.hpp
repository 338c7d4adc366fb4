#pragma once

#include <limits>
#include <span>
#include <vector>

#include "tmc/scene_io.hpp"

namespace tmc {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

// Planes hold samples in [0, 1]; errors are measured in 8-bit units (x 255).
double mse(std::span<const double> ref, std::span<const double> test);
double psnr_from_mse(double mse, double peak = 255.0);
double psnr(std::span<const double> ref, std::span<const double> test, double peak = 255.0);

enum class MetricDomain { Rgb, CodedSpace };

struct ViewPsnr {
    double psnr = 0.0;                     // from the MSE averaged over exposures and channels
    std::vector<double> per_exposure;      // one PSNR per exposure, over channels
};

struct ScenePsnr {
    std::vector<ViewPsnr> views;
};

// Rgb converts both scenes to RGB first; CodedSpace compares the planes as stored
// (both scenes must then be in the same color space).
ScenePsnr scene_psnr(const SceneStack& ref, const SceneStack& test, MetricDomain domain = MetricDomain::Rgb);

}  // namespace tmc
