#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "netlens/errors.hpp"
#include "netlens/network.hpp"
#include "netlens/npy.hpp"
#include "netlens/prng.hpp"
#include "netlens/synthetic.hpp"
#include "test_util.hpp"

using namespace netlens;

namespace {

LayerSpec conv_layer(const std::string& name, std::size_t out_c, std::size_t in_c,
                     std::size_t k, std::size_t stride, std::size_t pad,
                     std::vector<float> w, std::vector<float> b) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::Conv2d;
    l.out_channels = out_c;
    l.kernel_h = l.kernel_w = k;
    l.stride = stride;
    l.pad = pad;
    l.weights = Tensor({out_c, in_c, k, k}, std::move(w));
    l.bias = Tensor({out_c}, std::move(b));
    l.has_weights = true;
    return l;
}

LayerSpec dense_layer(const std::string& name, std::size_t out_f, std::size_t in_f,
                      std::vector<float> w, std::vector<float> b) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::Dense;
    l.out_features = out_f;
    l.weights = Tensor({out_f, in_f}, std::move(w));
    l.bias = Tensor({out_f}, std::move(b));
    l.has_weights = true;
    return l;
}

LayerSpec plain_layer(const std::string& name, LayerKind kind) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    return l;
}

} // namespace

TEST_CASE("identity 1x1 conv reproduces its input") {
    NetworkSpec net;
    net.input_shape = {1, 2, 2};
    net.classes = 4;
    net.layers.push_back(conv_layer("conv1", 1, 1, 1, 1, 0, {1.0f}, {0.0f}));
    net.layers.push_back(plain_layer("flat", LayerKind::Flatten));
    finalize_network(net);

    Tensor batch({1, 1, 2, 2}, {0.1f, 0.2f, 0.3f, 0.4f});
    ForwardResult r = forward(net, batch, true);
    CHECK(r.trace->at("conv1").data == batch.data);
    CHECK(r.logits.data == batch.data);
}

TEST_CASE("a single-conv manifest loads and runs as an identity map") {
    TempDir tmp;
    write_npy(Tensor({1, 1, 1, 1}, {1.0f}), tmp.path() / "k.npy");
    write_npy(Tensor({1}, {0.0f}), tmp.path() / "b.npy");
    std::ofstream(tmp.path() / "manifest.json") << R"({
      "input_shape": [1, 2, 2], "classes": 5,
      "layers": [
        {"name": "conv1", "kind": "conv2d",
         "params": {"out_channels": 1, "kernel": [1,1], "stride": 1, "pad": 0},
         "weights": "k.npy", "bias": "b.npy"}
      ]})";
    NetworkSpec net = load_network(tmp.path() / "manifest.json");
    REQUIRE(net.layers.size() == 1);

    Tensor batch({1, 1, 2, 2}, {0.4f, 0.3f, 0.2f, 0.1f});
    ForwardResult r = forward(net, batch, true);
    CHECK(r.logits.data == batch.data);
}

TEST_CASE("dense layer follows the W[k][j] convention") {
    // row k of W dotted with x: [[1,2],[3,4]] . [1,1] = [3,7]
    NetworkSpec net;
    net.input_shape = {2, 1, 1};
    net.classes = 2;
    net.layers.push_back(plain_layer("flat", LayerKind::Flatten));
    net.layers.push_back(dense_layer("fc", 2, 2, {1, 2, 3, 4}, {0, 0}));
    finalize_network(net);

    Tensor batch({1, 2, 1, 1}, {1.0f, 1.0f});
    ForwardResult r = forward(net, batch, false);
    CHECK(r.logits.data[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.logits.data[1] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("relu clamps negatives") {
    NetworkSpec net;
    net.input_shape = {2, 1, 1};
    net.classes = 2;
    net.layers.push_back(plain_layer("relu", LayerKind::Relu));
    net.layers.push_back(plain_layer("flat", LayerKind::Flatten));
    finalize_network(net);
    Tensor batch({1, 2, 1, 1}, {-1.0f, 2.0f});
    ForwardResult r = forward(net, batch, false);
    CHECK(r.logits.data == std::vector<float>{0.0f, 2.0f});
}

TEST_CASE("softmax handles uniform, extreme and closed-form inputs") {
    auto p = softmax({0, 0, 0, 0, 0});
    for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    auto q = softmax({1000.0, 0.0});
    CHECK(q[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(q[1] == doctest::Approx(0.0).epsilon(1e-7));

    auto r = softmax({std::log(2.0), std::log(1.0)});
    CHECK(r[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    double s = 0.0;
    for (double v : softmax({0.3, -2.0, 5.0})) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-7));

    CHECK_THROWS_AS(softmax({std::nan(""), 0.0}), NumericError);
}

TEST_CASE("manifest loading round-trips a synthetic network") {
    TempDir tmp;
    SyntheticNetOptions opts;
    opts.seed = 11;
    NetworkSpec written = write_synthetic_network(opts, tmp.path());
    NetworkSpec loaded = load_network(tmp.path() / "manifest.json");
    REQUIRE(loaded.layers.size() == written.layers.size());
    CHECK(loaded.input_shape == written.input_shape);
    CHECK(loaded.layers[0].weights.data == written.layers[0].weights.data);

    Tensor batch({2, 3, 16, 16});
    SplitMix64 rng(5);
    for (float& v : batch.data) v = static_cast<float>(rng.next_double());
    ForwardResult a = forward(written, batch, false);
    ForwardResult b = forward(loaded, batch, false);
    CHECK(a.logits.data == b.logits.data);
}

TEST_CASE("load_network reports an out_channels mismatch by layer name") {
    TempDir tmp;
    write_npy(Tensor({3, 1, 1, 1}, {1, 1, 1}), tmp.path() / "k.npy");
    write_npy(Tensor({4}, {0, 0, 0, 0}), tmp.path() / "b.npy");
    std::ofstream(tmp.path() / "manifest.json") << R"({
      "input_shape": [1, 2, 2], "classes": 4,
      "layers": [
        {"name": "conv1", "kind": "conv2d",
         "params": {"out_channels": 4, "kernel": [1,1], "stride": 1, "pad": 0},
         "weights": "k.npy", "bias": "b.npy"},
        {"name": "flat", "kind": "flatten"}
      ]})";
    try {
        load_network(tmp.path() / "manifest.json");
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("conv1: out_channels mismatch") != std::string::npos);
    }
}

TEST_CASE("load_network rejects missing weight files and unknown inputs") {
    TempDir tmp;
    std::ofstream(tmp.path() / "manifest.json") << R"({
      "input_shape": [1, 2, 2], "classes": 4,
      "layers": [
        {"name": "conv1", "kind": "conv2d",
         "params": {"out_channels": 1, "kernel": [1,1]},
         "weights": "nope.npy", "bias": "nope_b.npy"},
        {"name": "flat", "kind": "flatten"}
      ]})";
    CHECK_THROWS_AS(load_network(tmp.path() / "manifest.json"), IoError);

    NetworkSpec net;
    net.input_shape = {1, 2, 2};
    net.classes = 4;
    net.layers.push_back(plain_layer("flat", LayerKind::Flatten));
    net.layers.back().inputs = {"ghost"};
    CHECK_THROWS_AS(finalize_network(net), ContractError);
}

TEST_CASE("batchnorm folds into the preceding conv") {
    // manual batchnorm oracle on the unfolded conv output
    TempDir tmp;
    const std::size_t c = 2;
    SplitMix64 rng(42);
    Tensor kernel({c, 1, 3, 3});
    for (float& v : kernel.data) v = static_cast<float>(rng.next_uniform(-1, 1));
    Tensor bias({c}, {0.3f, -0.2f});
    Tensor gamma({c}, {1.5f, 0.7f});
    Tensor beta({c}, {0.1f, -0.4f});
    Tensor mean({c}, {0.25f, -0.1f});
    Tensor var({c}, {0.9f, 0.04f});
    const double eps = 1e-5;

    write_npy(kernel, tmp.path() / "k.npy");
    write_npy(bias, tmp.path() / "b.npy");
    write_npy(gamma, tmp.path() / "g.npy");
    write_npy(beta, tmp.path() / "be.npy");
    write_npy(mean, tmp.path() / "mu.npy");
    write_npy(var, tmp.path() / "va.npy");
    std::ofstream(tmp.path() / "manifest.json") << R"({
      "input_shape": [1, 4, 4], "classes": 2,
      "layers": [
        {"name": "conv1", "kind": "conv2d",
         "params": {"out_channels": 2, "kernel": [3,3], "stride": 1, "pad": 1},
         "weights": "k.npy", "bias": "b.npy"},
        {"name": "bn1", "kind": "batchnorm", "params": {"eps": 1e-5},
         "gamma": "g.npy", "beta": "be.npy", "mean": "mu.npy", "var": "va.npy"},
        {"name": "gap", "kind": "avgpool_global"}
      ]})";
    NetworkSpec folded = load_network(tmp.path() / "manifest.json");
    REQUIRE(folded.layers.size() == 2); // bn entry folded away

    NetworkSpec unfolded;
    unfolded.input_shape = {1, 4, 4};
    unfolded.classes = 2;
    {
        LayerSpec l = conv_layer("conv1", 2, 1, 3, 1, 1, kernel.data, bias.data);
        unfolded.layers.push_back(l);
        unfolded.layers.push_back(plain_layer("gap", LayerKind::AvgPoolGlobal));
        finalize_network(unfolded);
    }

    Tensor batch({1, 1, 4, 4});
    SplitMix64 img_rng(7);
    for (float& v : batch.data) v = static_cast<float>(img_rng.next_double());

    ForwardResult folded_out = forward(folded, batch, true);
    ForwardResult raw = forward(unfolded, batch, true);
    const Tensor& conv_raw = raw.trace->at("conv1");
    const Tensor& conv_folded = folded_out.trace->at("conv1");
    for (std::size_t ch = 0; ch < c; ++ch) {
        double scale = gamma.data[ch] / std::sqrt(static_cast<double>(var.data[ch]) + eps);
        for (std::size_t p = 0; p < 16; ++p) {
            double expected =
                (conv_raw.data[ch * 16 + p] - mean.data[ch]) * scale + beta.data[ch];
            CHECK(conv_folded.data[ch * 16 + p] == doctest::Approx(expected).epsilon(1e-5));
        }
    }
}

TEST_CASE("batchnorm without a preceding conv is rejected") {
    TempDir tmp;
    write_npy(Tensor({1}, {1.0f}), tmp.path() / "g.npy");
    std::ofstream(tmp.path() / "manifest.json") << R"({
      "input_shape": [1, 2, 2], "classes": 4,
      "layers": [
        {"name": "bn", "kind": "batchnorm",
         "gamma": "g.npy", "beta": "g.npy", "mean": "g.npy", "var": "g.npy"},
        {"name": "flat", "kind": "flatten"}
      ]})";
    CHECK_THROWS_AS(load_network(tmp.path() / "manifest.json"), ContractError);
}

TEST_CASE("synthetic generation is deterministic") {
    TempDir a, b;
    SyntheticNetOptions opts;
    opts.seed = 7;
    write_synthetic_network(opts, a.path());
    write_synthetic_network(opts, b.path());
    for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
        auto other = b.path() / entry.path().filename();
        CHECK(slurp(entry.path()) == slurp(other));
    }
}

TEST_CASE("synthetic structure: depth 3 ends in avgpool and dense head") {
    NetworkSpec net = make_synthetic_network({0, 3, {4, 8, 5}, {3, 16, 16}, 5, false});
    REQUIRE(net.layers.size() == 8); // 3x (conv, relu) + gap + fc
    CHECK(net.layers[0].kind == LayerKind::Conv2d);
    CHECK(net.layers[0].out_channels == 4);
    CHECK(net.layers[2].out_channels == 8);
    CHECK(net.layers[4].out_channels == 5);
    CHECK(net.layers[6].kind == LayerKind::AvgPoolGlobal);
    CHECK(net.layers[7].kind == LayerKind::Dense);
    CHECK(net.layers[7].out_features == 5);
}

TEST_CASE("synthetic networks produce finite logits over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        NetworkSpec net = make_synthetic_network({seed, 3, {4, 8, 5}, {3, 16, 16}, 5, false});
        Tensor batch({1, 3, 16, 16});
        SplitMix64 rng(seed + 1000);
        for (float& v : batch.data) v = static_cast<float>(rng.next_double());
        ForwardResult r = forward(net, batch, false);
        for (float v : r.logits.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("forward is deterministic") {
    NetworkSpec net = make_synthetic_network({3, 2, {4, 6}, {3, 8, 8}, 5, false});
    Tensor batch({2, 3, 8, 8});
    SplitMix64 rng(9);
    for (float& v : batch.data) v = static_cast<float>(rng.next_double());
    ForwardResult a = forward(net, batch, false);
    ForwardResult b = forward(net, batch, false);
    CHECK(std::memcmp(a.logits.data.data(), b.logits.data.data(),
                      a.logits.data.size() * sizeof(float)) == 0);
}

TEST_CASE("conv shape algebra holds for traced layers") {
    SplitMix64 rng(123);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t k = 1 + rng.next_u64() % 4;
        std::size_t stride = 1 + rng.next_u64() % 3;
        std::size_t pad = rng.next_u64() % 3;
        std::size_t h = k + rng.next_u64() % 12;
        NetworkSpec net;
        net.input_shape = {2, h, h};
        std::size_t out_c = 3;
        std::vector<float> w(out_c * 2 * k * k);
        for (float& v : w) v = static_cast<float>(rng.next_uniform(-0.5, 0.5));
        net.layers.push_back(conv_layer("c", out_c, 2, k, stride, pad, w, {0, 0, 0}));
        net.layers.push_back(plain_layer("gap", LayerKind::AvgPoolGlobal));
        net.classes = out_c;
        finalize_network(net);

        std::size_t expect = (h + 2 * pad - k) / stride + 1;
        Tensor batch({1, 2, h, h});
        for (float& v : batch.data) v = static_cast<float>(rng.next_double());
        ForwardResult r = forward(net, batch, true);
        const Tensor& out = r.trace->at("c");
        CHECK(out.shape[2] == expect);
        CHECK(out.shape[3] == expect);
    }
}

TEST_CASE("replaying forward from a recorded activation matches the trace exactly") {
    NetworkSpec net = make_synthetic_network({21, 3, {4, 8, 5}, {3, 12, 12}, 5, false});
    Tensor batch({1, 3, 12, 12});
    SplitMix64 rng(2);
    for (float& v : batch.data) v = static_cast<float>(rng.next_double());
    ForwardResult full = forward(net, batch, true);

    // resume at relu1's output and recompute conv2 onward
    const Tensor& resume = full.trace->at("relu1");
    std::size_t idx = net.index_of("conv2");
    Tensor conv2 = eval_layer(net, net.layers[idx], {&resume});
    const Tensor& expected = full.trace->at("conv2");
    REQUIRE(conv2.data.size() == expected.data.size());
    CHECK(std::memcmp(conv2.data.data(), expected.data.data(),
                      conv2.data.size() * sizeof(float)) == 0);
}

TEST_CASE("add nodes require matching shapes and known producers") {
    NetworkSpec net;
    net.input_shape = {1, 2, 2};
    net.classes = 4;
    net.layers.push_back(conv_layer("c1", 1, 1, 1, 1, 0, {1.0f}, {0.0f}));
    net.layers.push_back(conv_layer("c2", 1, 1, 2, 1, 0, {1, 1, 1, 1}, {0.0f}));
    net.layers.back().inputs = {"c1"};
    LayerSpec add = plain_layer("merge", LayerKind::Add);
    add.inputs = {"c1", "c2"}; // (1,2,2) vs (1,1,1)
    net.layers.push_back(add);
    net.layers.push_back(plain_layer("flat", LayerKind::Flatten));
    CHECK_THROWS_AS(finalize_network(net), ContractError);
}

TEST_CASE("forward rejects a batch whose shape differs from the network input") {
    NetworkSpec net = make_synthetic_network({1, 1, {4}, {3, 8, 8}, 5, false});
    Tensor batch({1, 3, 9, 9});
    CHECK_THROWS_AS(forward(net, batch, false), ContractError);
}
