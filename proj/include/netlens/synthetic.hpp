#ifndef NETLENS_SYNTHETIC_HPP
#define NETLENS_SYNTHETIC_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "netlens/network.hpp"

namespace netlens {

struct SyntheticNetOptions {
    std::uint64_t seed = 0;
    std::size_t depth = 3;
    std::vector<std::size_t> channels = {4, 8, 5}; // per conv layer, length == depth
    std::vector<std::size_t> input_shape = {3, 16, 16};
    std::size_t classes = 5;
    bool zero_bias = false; // conservation fixtures
};

// Deterministic small CNN: depth convs (3x3, stride 1, pad 1) each followed
// by relu, then global avgpool and a dense head. Weights are uniform(-0.5,
// 0.5) from the SplitMix64 stream of `seed`.
NetworkSpec make_synthetic_network(const SyntheticNetOptions& opts);

// Same network written as manifest.json plus NPY weight files under dir.
NetworkSpec write_synthetic_network(const SyntheticNetOptions& opts,
                                    const std::filesystem::path& dir);

// Seeded CHW image with values in [0,1).
Tensor make_synthetic_image(std::uint64_t seed, const std::vector<std::size_t>& chw);

// Seeded binary (H,W) lesion mask built from 1-3 random rectangles;
// guaranteed non-empty and not full.
Tensor make_synthetic_mask(std::uint64_t seed, std::size_t h, std::size_t w);

} // namespace netlens

#endif
