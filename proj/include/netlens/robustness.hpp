#ifndef NETLENS_ROBUSTNESS_HPP
#define NETLENS_ROBUSTNESS_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netlens/network.hpp"

namespace netlens {

// Version tag for the built-in severity parameter tables; emitted in every
// run manifest so results can cite the exact table they were produced with.
inline constexpr const char* kDistortionTableVersion = "netlens-corruptions-v1";

enum class DistortionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    GaussianBlur,
    Pixelate,
    Contrast,
    Brightness,
    Saturate,
};

inline const std::vector<DistortionKind> kAllDistortions = {
    DistortionKind::GaussianNoise, DistortionKind::ShotNoise,  DistortionKind::ImpulseNoise,
    DistortionKind::GaussianBlur,  DistortionKind::Pixelate,   DistortionKind::Contrast,
    DistortionKind::Brightness,    DistortionKind::Saturate,
};

std::string distortion_name(DistortionKind kind);
DistortionKind distortion_from_name(const std::string& name);

// Severity-indexed parameter (1..5) from the built-in table.
double distortion_parameter(DistortionKind kind, int severity);

struct DistortionSpec {
    DistortionKind kind = DistortionKind::GaussianNoise;
    int severity = 1; // 1..5
    std::uint64_t seed = 0;
    // Replaces the table parameter when set; severity is then only a label.
    std::optional<double> param_override;
};

// Applies one corruption to a CHW image in [0,1]; output is clamped back to
// [0,1]. Stochastic kinds draw from SplitMix64(spec.seed).
Tensor apply_distortion(const Tensor& img_chw, const DistortionSpec& spec);

struct RobustnessCell {
    DistortionKind kind;
    int severity;
    double mean_delta = 0.0; // mean over images of p_A(disease) - p_B(disease)
    std::size_t n = 0;
};

struct RobustnessGrid {
    std::string model_a, model_b;
    std::vector<RobustnessCell> cells;
};

// For every (kind, severity): distort each image with a per-image derived
// seed, run both models on the identical distorted input, and average the
// disease-probability difference. Disease probability is the softmax mass on
// the non-healthy grades.
RobustnessGrid softmax_delta_grid(const NetworkSpec& model_a, const NetworkSpec& model_b,
                                  const std::vector<Tensor>& images,
                                  const std::vector<DistortionKind>& kinds,
                                  const std::vector<int>& severities, std::uint64_t seed,
                                  const std::set<int>& healthy_grades = {0, 1, 2});

} // namespace netlens

#endif
