#include "netlens/synthetic.hpp"

#include <algorithm>

#include <json.hpp>

#include "netlens/errors.hpp"
#include "netlens/io_util.hpp"
#include "netlens/npy.hpp"
#include "netlens/prng.hpp"

namespace netlens {

namespace {

Tensor random_tensor(SplitMix64& rng, std::vector<std::size_t> shape, bool zero) {
    Tensor t(std::move(shape));
    if (!zero)
        for (float& v : t.data) v = static_cast<float>(rng.next_uniform(-0.5, 0.5));
    return t;
}

} // namespace

NetworkSpec make_synthetic_network(const SyntheticNetOptions& opts) {
    if (opts.depth < 1)
        throw ContractError("synthetic network: depth must be >= 1");
    if (opts.channels.size() != opts.depth)
        throw ContractError("synthetic network: channels list length must equal depth");
    if (opts.input_shape.size() != 3)
        throw ContractError("synthetic network: input shape must be (C,H,W)");

    SplitMix64 rng(opts.seed);
    NetworkSpec net;
    net.input_shape = opts.input_shape;
    net.classes = opts.classes;

    std::size_t in_c = opts.input_shape[0];
    for (std::size_t d = 0; d < opts.depth; ++d) {
        LayerSpec conv;
        conv.name = "conv" + std::to_string(d + 1);
        conv.kind = LayerKind::Conv2d;
        conv.out_channels = opts.channels[d];
        conv.kernel_h = conv.kernel_w = 3;
        conv.stride = 1;
        conv.pad = 1;
        conv.weights = random_tensor(rng, {conv.out_channels, in_c, 3, 3}, false);
        conv.bias = random_tensor(rng, {conv.out_channels}, opts.zero_bias);
        conv.has_weights = true;
        net.layers.push_back(std::move(conv));

        LayerSpec relu;
        relu.name = "relu" + std::to_string(d + 1);
        relu.kind = LayerKind::Relu;
        net.layers.push_back(std::move(relu));

        in_c = opts.channels[d];
    }

    LayerSpec gap;
    gap.name = "gap";
    gap.kind = LayerKind::AvgPoolGlobal;
    net.layers.push_back(std::move(gap));

    LayerSpec fc;
    fc.name = "fc";
    fc.kind = LayerKind::Dense;
    fc.out_features = opts.classes;
    fc.weights = random_tensor(rng, {opts.classes, in_c}, false);
    fc.bias = random_tensor(rng, {opts.classes}, opts.zero_bias);
    fc.has_weights = true;
    net.layers.push_back(std::move(fc));

    finalize_network(net);
    return net;
}

NetworkSpec write_synthetic_network(const SyntheticNetOptions& opts,
                                    const std::filesystem::path& dir) {
    NetworkSpec net = make_synthetic_network(opts);
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["input_shape"] = net.input_shape;
    manifest["classes"] = net.classes;
    manifest["layers"] = nlohmann::json::array();
    for (const LayerSpec& l : net.layers) {
        nlohmann::json jl;
        jl["name"] = l.name;
        jl["kind"] = layer_kind_name(l.kind);
        if (l.kind == LayerKind::Conv2d) {
            jl["params"] = {{"out_channels", l.out_channels},
                            {"kernel", {l.kernel_h, l.kernel_w}},
                            {"stride", l.stride},
                            {"pad", l.pad}};
        } else if (l.kind == LayerKind::Dense) {
            jl["params"] = {{"out_features", l.out_features}};
        }
        if (l.has_weights) {
            std::string w = l.name + "_w.npy";
            std::string b = l.name + "_b.npy";
            write_npy(l.weights, dir / w);
            write_npy(l.bias, dir / b);
            jl["weights"] = w;
            jl["bias"] = b;
        }
        manifest["layers"].push_back(jl);
    }
    atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return net;
}

Tensor make_synthetic_image(std::uint64_t seed, const std::vector<std::size_t>& chw) {
    if (chw.size() != 3)
        throw ContractError("synthetic image: shape must be (C,H,W)");
    SplitMix64 rng(seed);
    Tensor img(chw, Layout::Chw);
    for (float& v : img.data) v = static_cast<float>(rng.next_double());
    return img;
}

Tensor make_synthetic_mask(std::uint64_t seed, std::size_t h, std::size_t w) {
    if (h < 2 || w < 2)
        throw ContractError("synthetic mask: grid must be at least 2x2");
    SplitMix64 rng(seed);
    Tensor mask({h, w}, Layout::Matrix);
    std::size_t rects = 1 + rng.next_u64() % 3;
    for (std::size_t r = 0; r < rects; ++r) {
        std::size_t rh = 1 + rng.next_u64() % std::max<std::size_t>(1, h / 3);
        std::size_t rw = 1 + rng.next_u64() % std::max<std::size_t>(1, w / 3);
        std::size_t y0 = rng.next_u64() % (h - rh + 1);
        std::size_t x0 = rng.next_u64() % (w - rw + 1);
        for (std::size_t y = y0; y < y0 + rh; ++y)
            for (std::size_t x = x0; x < x0 + rw; ++x)
                mask.data[y * w + x] = 1.0f;
    }
    // keep the mask scoreable: non-empty by construction, force a hole so it
    // is never full
    mask.data[h * w - 1] = 0.0f;
    bool any = false;
    for (float v : mask.data)
        if (v > 0.0f) { any = true; break; }
    if (!any) mask.data[0] = 1.0f;
    return mask;
}

} // namespace netlens
