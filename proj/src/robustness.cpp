#include "netlens/robustness.hpp"

#include <algorithm>
#include <cmath>

#include "netlens/classify.hpp"
#include "netlens/errors.hpp"
#include "netlens/prng.hpp"

namespace netlens {

namespace {

constexpr double kSeverityTable[8][5] = {
    {0.04, 0.06, 0.08, 0.09, 0.10}, // gaussian_noise sigma
    {60.0, 25.0, 12.0, 5.0, 3.0},   // shot_noise photon scale
    {0.01, 0.02, 0.03, 0.05, 0.07}, // impulse_noise flip fraction
    {0.5, 0.75, 1.0, 1.25, 1.5},    // gaussian_blur sigma
    {2.0, 3.0, 4.0, 5.0, 6.0},      // pixelate block
    {0.75, 0.6, 0.45, 0.3, 0.15},   // contrast factor
    {0.05, 0.10, 0.15, 0.20, 0.25}, // brightness offset
    {1.3, 1.6, 1.9, 2.2, 2.5},      // saturate factor
};

float clamp01(double v) {
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

void check_range(const Tensor& img) {
    for (float v : img.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw ContractError("apply_distortion: pixel " + std::to_string(v) +
                                " outside [0,1]");
}

Tensor blur(const Tensor& img, double sigma) {
    if (sigma <= 0.0) return img;
    const std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int radius = static_cast<int>(std::ceil(2.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    auto clamp_idx = [](long i, std::size_t n) {
        return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
    };

    // separable pass: rows then columns, replicated edges
    std::vector<double> tmp(img.data.size());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           img.data[img.offset3(ch, y, clamp_idx(static_cast<long>(x) + i, w))];
                tmp[img.offset3(ch, y, x)] = acc;
            }
    Tensor out = img;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           tmp[img.offset3(ch, clamp_idx(static_cast<long>(y) + i, h), x)];
                out.data[img.offset3(ch, y, x)] = clamp01(acc);
            }
    return out;
}

Tensor pixelate(const Tensor& img, std::size_t block) {
    if (block <= 1) return img;
    const std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    Tensor out = img;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y0 = 0; y0 < h; y0 += block)
            for (std::size_t x0 = 0; x0 < w; x0 += block) {
                const std::size_t y1 = std::min(y0 + block, h);
                const std::size_t x1 = std::min(x0 + block, w);
                double acc = 0.0;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x)
                        acc += img.data[img.offset3(ch, y, x)];
                float mean = static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x)
                        out.data[img.offset3(ch, y, x)] = mean;
            }
    return out;
}

} // namespace

std::string distortion_name(DistortionKind kind) {
    switch (kind) {
        case DistortionKind::GaussianNoise: return "gaussian_noise";
        case DistortionKind::ShotNoise: return "shot_noise";
        case DistortionKind::ImpulseNoise: return "impulse_noise";
        case DistortionKind::GaussianBlur: return "gaussian_blur";
        case DistortionKind::Pixelate: return "pixelate";
        case DistortionKind::Contrast: return "contrast";
        case DistortionKind::Brightness: return "brightness";
        case DistortionKind::Saturate: return "saturate";
    }
    return "?";
}

DistortionKind distortion_from_name(const std::string& name) {
    for (DistortionKind k : kAllDistortions)
        if (distortion_name(k) == name) return k;
    throw ContractError("unknown distortion kind '" + name + "'");
}

double distortion_parameter(DistortionKind kind, int severity) {
    if (severity < 1 || severity > 5)
        throw ContractError("severity " + std::to_string(severity) + " out of range 1..5");
    return kSeverityTable[static_cast<int>(kind)][severity - 1];
}

Tensor apply_distortion(const Tensor& img, const DistortionSpec& spec) {
    if (img.shape.size() != 3)
        throw ContractError("apply_distortion: image must be (C,H,W)");
    check_range(img);
    const double p = spec.param_override ? *spec.param_override
                                         : distortion_parameter(spec.kind, spec.severity);
    const std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    SplitMix64 rng(spec.seed);

    switch (spec.kind) {
        case DistortionKind::GaussianNoise: {
            Tensor out = img;
            for (float& v : out.data) v = clamp01(v + p * rng.next_gaussian());
            return out;
        }
        case DistortionKind::ShotNoise: {
            Tensor out = img;
            for (float& v : out.data)
                v = clamp01(static_cast<double>(rng.next_poisson(v * p)) / p);
            return out;
        }
        case DistortionKind::ImpulseNoise: {
            // fixed two draws per element, so the flip set at a lower
            // fraction nests inside the flip set at a higher one for equal
            // seeds
            Tensor out = img;
            for (float& v : out.data) {
                double u = rng.next_double();
                float salt = rng.next_double() < 0.5 ? 0.0f : 1.0f;
                if (u < p) v = salt;
            }
            return out;
        }
        case DistortionKind::GaussianBlur:
            return blur(img, p);
        case DistortionKind::Pixelate:
            return pixelate(img, static_cast<std::size_t>(p));
        case DistortionKind::Contrast: {
            double mean = 0.0;
            for (float v : img.data) mean += v;
            mean /= static_cast<double>(img.data.size());
            Tensor out = img;
            for (float& v : out.data) v = clamp01(mean + p * (v - mean));
            return out;
        }
        case DistortionKind::Brightness: {
            Tensor out = img;
            for (float& v : out.data) v = clamp01(v + p);
            return out;
        }
        case DistortionKind::Saturate: {
            Tensor out = img;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double gray = 0.0;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        gray += img.data[img.offset3(ch, y, x)];
                    gray /= static_cast<double>(c);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        double v = img.data[img.offset3(ch, y, x)];
                        out.data[img.offset3(ch, y, x)] = clamp01(gray + p * (v - gray));
                    }
                }
            return out;
        }
    }
    throw ContractError("apply_distortion: unknown kind");
}

RobustnessGrid softmax_delta_grid(const NetworkSpec& model_a, const NetworkSpec& model_b,
                                  const std::vector<Tensor>& images,
                                  const std::vector<DistortionKind>& kinds,
                                  const std::vector<int>& severities, std::uint64_t seed,
                                  const std::set<int>& healthy_grades) {
    if (model_a.input_shape != model_b.input_shape || model_a.classes != model_b.classes)
        throw ContractError("softmax_delta_grid: models differ in input shape or classes");
    if (images.empty())
        throw ContractError("softmax_delta_grid: no images");

    auto disease_prob = [&](const NetworkSpec& net, const Tensor& img) {
        Tensor batch = img;
        batch.shape.insert(batch.shape.begin(), 1);
        ForwardResult r = forward(net, batch, false);
        std::vector<double> logits(r.logits.data.begin(), r.logits.data.end());
        std::vector<double> probs = softmax(logits);
        double disease = 0.0;
        for (std::size_t g = 0; g < probs.size(); ++g)
            if (!healthy_grades.count(static_cast<int>(g))) disease += probs[g];
        return disease;
    };

    RobustnessGrid grid;
    for (DistortionKind kind : kinds)
        for (int severity : severities) {
            RobustnessCell cell{kind, severity, 0.0, images.size()};
            double sum = 0.0;
            for (std::size_t i = 0; i < images.size(); ++i) {
                std::uint64_t s = seed;
                s = derive_seed(s, i);
                s = derive_seed(s, static_cast<std::uint64_t>(kind) + 0x100);
                s = derive_seed(s, static_cast<std::uint64_t>(severity));
                Tensor distorted = apply_distortion(images[i], {kind, severity, s});
                sum += disease_prob(model_a, distorted) - disease_prob(model_b, distorted);
            }
            cell.mean_delta = sum / static_cast<double>(images.size());
            grid.cells.push_back(cell);
        }
    return grid;
}

} // namespace netlens
