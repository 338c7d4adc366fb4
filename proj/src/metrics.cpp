#include "tmc/metrics.hpp"

#include <cmath>
#include <string>

#include "tmc/errors.hpp"

namespace tmc {

namespace {

double sum_squared_error(std::span<const double> ref, std::span<const double> test) {
    if (ref.size() != test.size()) {
        throw ArgumentError("plane sizes differ: " + std::to_string(ref.size()) + " vs " + std::to_string(test.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = (ref[i] - test[i]) * 255.0;
        sum += d * d;
    }
    return sum;
}

}  // namespace

double mse(std::span<const double> ref, std::span<const double> test) {
    if (ref.empty() && test.empty()) throw ArgumentError("mse of empty planes");
    return sum_squared_error(ref, test) / static_cast<double>(ref.size());
}

double psnr_from_mse(double m, double peak) {
    if (m < 0.0 || std::isnan(m)) throw ArgumentError("mse must be non-negative");
    if (m == 0.0) return kPsnrInfinity;
    return 10.0 * std::log10(peak * peak / m);
}

double psnr(std::span<const double> ref, std::span<const double> test, double peak) {
    return psnr_from_mse(mse(ref, test), peak);
}

ScenePsnr scene_psnr(const SceneStack& ref_in, const SceneStack& test_in, MetricDomain domain) {
    ref_in.validate();
    test_in.validate();
    const auto& a = ref_in.meta;
    const auto& b = test_in.meta;
    if (a.views != b.views || a.exposures != b.exposures || a.width != b.width || a.height != b.height) {
        throw ArgumentError("scene shapes differ");
    }
    if (domain == MetricDomain::CodedSpace && a.space != b.space) {
        throw ArgumentError("coded-space PSNR needs both scenes in the same color space");
    }
    const SceneStack ref = domain == MetricDomain::Rgb ? scene_to_rgb(ref_in) : ref_in;
    const SceneStack test = domain == MetricDomain::Rgb ? scene_to_rgb(test_in) : test_in;

    ScenePsnr out;
    const double samples_per_exposure = 3.0 * static_cast<double>(a.width * a.height);
    for (std::size_t v = 0; v < a.views; ++v) {
        ViewPsnr vp;
        double view_sum = 0.0;
        for (std::size_t e = 0; e < a.exposures; ++e) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 3; ++c) sum += sum_squared_error(ref.image(v, e).planes[c], test.image(v, e).planes[c]);
            vp.per_exposure.push_back(psnr_from_mse(sum / samples_per_exposure));
            view_sum += sum;
        }
        vp.psnr = psnr_from_mse(view_sum / (samples_per_exposure * static_cast<double>(a.exposures)));
        out.views.push_back(std::move(vp));
    }
    return out;
}

}  // namespace tmc
