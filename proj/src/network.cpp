#include "netlens/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "netlens/errors.hpp"
#include "netlens/npy.hpp"

namespace netlens {

namespace {

constexpr const char* kInputName = "input";

std::size_t conv_out_extent(std::size_t in, std::size_t pad, std::size_t k, std::size_t stride,
                            const std::string& layer, const std::string& axis) {
    if (in + 2 * pad < k)
        throw ContractError(layer + ": kernel " + axis + " larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPoolGlobal: return "avgpool_global";
        case LayerKind::Add: return "add";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::SoftmaxHead: return "softmax_head";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "dense") return LayerKind::Dense;
    if (name == "relu") return LayerKind::Relu;
    if (name == "maxpool") return LayerKind::MaxPool;
    if (name == "avgpool_global") return LayerKind::AvgPoolGlobal;
    if (name == "add") return LayerKind::Add;
    if (name == "flatten") return LayerKind::Flatten;
    if (name == "softmax_head") return LayerKind::SoftmaxHead;
    throw ContractError("unknown layer kind '" + name + "'");
}

const LayerSpec* NetworkSpec::find(const std::string& name) const {
    for (const auto& l : layers)
        if (l.name == name) return &l;
    return nullptr;
}

std::size_t NetworkSpec::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == name) return i;
    throw ContractError("no layer named '" + name + "'");
}

std::size_t NetworkSpec::logits_index() const {
    if (layers.empty())
        throw ContractError("network has no layers");
    std::size_t last = layers.size() - 1;
    if (layers[last].kind == LayerKind::SoftmaxHead) {
        if (last == 0)
            throw ContractError("softmax_head cannot be the only layer");
        return index_of(layers[last].inputs.at(0));
    }
    return last;
}

const Tensor& ActivationTrace::at(const std::string& name) const {
    auto it = outputs.find(name);
    if (it == outputs.end())
        throw ContractError("no recorded activation for layer '" + name + "'");
    return it->second;
}

void finalize_network(NetworkSpec& net) {
    if (net.input_shape.size() != 3)
        throw ContractError("input_shape must be (C,H,W), got " +
                            shape_to_string(net.input_shape));
    if (net.layers.empty())
        throw ContractError("network has no layers");
    if (net.classes == 0)
        throw ContractError("class count must be positive");

    std::set<std::string> seen;
    std::map<std::string, std::vector<std::size_t>> shapes;
    shapes[kInputName] = net.input_shape;
    std::map<std::string, std::size_t> consumers;

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        LayerSpec& l = net.layers[i];
        if (l.name == kInputName || l.name.empty())
            throw ContractError("invalid layer name '" + l.name + "'");
        if (!seen.insert(l.name).second)
            throw ContractError(l.name + ": duplicate layer name");

        // default chaining: previous layer, or the network input for layer 0
        if (l.inputs.empty())
            l.inputs.push_back(i == 0 ? kInputName : net.layers[i - 1].name);

        std::size_t expected_inputs = l.kind == LayerKind::Add ? 2 : 1;
        if (l.inputs.size() != expected_inputs)
            throw ContractError(l.name + ": expects " + std::to_string(expected_inputs) +
                                " input(s), got " + std::to_string(l.inputs.size()));
        for (const auto& in : l.inputs) {
            if (!shapes.count(in))
                throw ContractError(l.name + ": input '" + in +
                                    "' is not an earlier layer (cycle or unknown name)");
            consumers[in]++;
        }

        const std::vector<std::size_t>& in_shape = shapes.at(l.inputs[0]);
        switch (l.kind) {
            case LayerKind::Conv2d: {
                if (in_shape.size() != 3)
                    throw ContractError(l.name + ": conv2d needs (C,H,W) input, got " +
                                        shape_to_string(in_shape));
                if (l.kernel_h == 0 || l.kernel_w == 0 || l.stride == 0 || l.out_channels == 0)
                    throw ContractError(l.name + ": conv2d params incomplete");
                if (!l.has_weights)
                    throw ContractError(l.name + ": conv2d has no weights");
                std::vector<std::size_t> want = {l.out_channels, in_shape[0], l.kernel_h,
                                                 l.kernel_w};
                if (l.weights.shape != want) {
                    if (l.weights.shape.size() == 4 && l.weights.shape[0] != l.out_channels)
                        throw ContractError(l.name + ": out_channels mismatch (declared " +
                                            std::to_string(l.out_channels) + ", kernel file has " +
                                            std::to_string(l.weights.shape[0]) + ")");
                    throw ContractError(l.name + ": kernel shape " +
                                        shape_to_string(l.weights.shape) + ", expected " +
                                        shape_to_string(want));
                }
                if (l.bias.shape != std::vector<std::size_t>{l.out_channels})
                    throw ContractError(l.name + ": bias length must equal out_channels");
                std::size_t oh = conv_out_extent(in_shape[1], l.pad, l.kernel_h, l.stride, l.name, "h");
                std::size_t ow = conv_out_extent(in_shape[2], l.pad, l.kernel_w, l.stride, l.name, "w");
                l.out_shape = {l.out_channels, oh, ow};
                break;
            }
            case LayerKind::Dense: {
                if (in_shape.size() != 1)
                    throw ContractError(l.name + ": dense needs flat input, got " +
                                        shape_to_string(in_shape) + " (insert flatten/avgpool)");
                if (!l.has_weights)
                    throw ContractError(l.name + ": dense has no weights");
                std::vector<std::size_t> want = {l.out_features, in_shape[0]};
                if (l.weights.shape != want)
                    throw ContractError(l.name + ": weight shape " +
                                        shape_to_string(l.weights.shape) + ", expected " +
                                        shape_to_string(want));
                if (l.bias.shape != std::vector<std::size_t>{l.out_features})
                    throw ContractError(l.name + ": bias length must equal out_features");
                l.out_shape = {l.out_features};
                break;
            }
            case LayerKind::Relu:
                l.out_shape = in_shape;
                break;
            case LayerKind::MaxPool: {
                if (in_shape.size() != 3)
                    throw ContractError(l.name + ": maxpool needs (C,H,W) input");
                if (l.window_h == 0 || l.window_w == 0)
                    throw ContractError(l.name + ": maxpool window missing");
                if (l.pool_stride_h == 0) l.pool_stride_h = l.window_h;
                if (l.pool_stride_w == 0) l.pool_stride_w = l.window_w;
                if (in_shape[1] < l.window_h || in_shape[2] < l.window_w)
                    throw ContractError(l.name + ": maxpool window larger than input");
                l.out_shape = {in_shape[0],
                               (in_shape[1] - l.window_h) / l.pool_stride_h + 1,
                               (in_shape[2] - l.window_w) / l.pool_stride_w + 1};
                break;
            }
            case LayerKind::AvgPoolGlobal:
                if (in_shape.size() != 3)
                    throw ContractError(l.name + ": avgpool_global needs (C,H,W) input");
                l.out_shape = {in_shape[0]};
                break;
            case LayerKind::Add: {
                const auto& other = shapes.at(l.inputs[1]);
                if (in_shape != other)
                    throw ContractError(l.name + ": add inputs have different shapes " +
                                        shape_to_string(in_shape) + " vs " +
                                        shape_to_string(other));
                l.out_shape = in_shape;
                break;
            }
            case LayerKind::Flatten: {
                l.out_shape = {shape_product(in_shape)};
                break;
            }
            case LayerKind::SoftmaxHead:
                if (in_shape.size() != 1)
                    throw ContractError(l.name + ": softmax_head needs flat input");
                if (i + 1 != net.layers.size())
                    throw ContractError(l.name + ": softmax_head must be the last layer");
                l.out_shape = in_shape;
                break;
        }
        shapes[l.name] = l.out_shape;
    }

    // single output node: everything except the final layer must be consumed
    for (std::size_t i = 0; i + 1 < net.layers.size(); ++i)
        if (consumers[net.layers[i].name] == 0)
            throw ContractError(net.layers[i].name +
                                ": dangling layer (graph must have a single output)");

    // class-count constraint binds on flat heads; feature-extractor graphs
    // ending in a spatial tensor are loadable but yield no class scores
    const auto& out = net.layers[net.logits_index()].out_shape;
    if (out.size() == 1 && out[0] != net.classes)
        throw ContractError("final output width " + shape_to_string(out) +
                            " does not match class count " + std::to_string(net.classes));
}

NetworkSpec load_network(const std::filesystem::path& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in)
        throw IoError(manifest_path.string() + ": cannot open manifest");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": invalid JSON: " + e.what());
    }
    fs::path dir = manifest_path.parent_path();

    NetworkSpec net;
    try {
        net.input_shape = doc.at("input_shape").get<std::vector<std::size_t>>();
        net.classes = doc.at("classes").get<std::size_t>();

        auto load_ref = [&](const nlohmann::json& spec, const char* key,
                            const std::string& layer) -> Tensor {
            if (!spec.contains(key))
                throw ContractError(layer + ": missing weight ref '" + std::string(key) + "'");
            fs::path p = dir / spec.at(key).get<std::string>();
            return read_npy(p);
        };

        for (const auto& jl : doc.at("layers")) {
            std::string name = jl.at("name").get<std::string>();
            std::string kind = jl.at("kind").get<std::string>();
            nlohmann::json params = jl.value("params", nlohmann::json::object());

            if (kind == "batchnorm") {
                // fold (gamma, beta, mean, var, eps) into the preceding conv
                if (net.layers.empty() || net.layers.back().kind != LayerKind::Conv2d)
                    throw ContractError(name + ": batchnorm must directly follow a conv2d");
                LayerSpec& conv = net.layers.back();
                Tensor gamma = load_ref(jl, "gamma", name);
                Tensor beta = load_ref(jl, "beta", name);
                Tensor mean = load_ref(jl, "mean", name);
                Tensor var = load_ref(jl, "var", name);
                double eps = params.value("eps", 1e-5);
                std::size_t c = conv.out_channels;
                for (const Tensor* t : {&gamma, &beta, &mean, &var})
                    if (t->shape != std::vector<std::size_t>{c})
                        throw ContractError(name + ": batchnorm tensor shape " +
                                            shape_to_string(t->shape) + ", expected (" +
                                            std::to_string(c) + ")");
                std::size_t per_channel = conv.weights.size() / c;
                for (std::size_t k = 0; k < c; ++k) {
                    double scale = static_cast<double>(gamma.data[k]) /
                                   std::sqrt(static_cast<double>(var.data[k]) + eps);
                    for (std::size_t j = 0; j < per_channel; ++j) {
                        std::size_t idx = k * per_channel + j;
                        conv.weights.data[idx] =
                            static_cast<float>(conv.weights.data[idx] * scale);
                    }
                    conv.bias.data[k] = static_cast<float>(
                        (static_cast<double>(conv.bias.data[k]) - mean.data[k]) * scale +
                        beta.data[k]);
                }
                continue;
            }

            LayerSpec l;
            l.name = name;
            l.kind = layer_kind_from_name(kind);
            if (jl.contains("input"))
                l.inputs.push_back(jl.at("input").get<std::string>());

            switch (l.kind) {
                case LayerKind::Conv2d: {
                    l.out_channels = params.at("out_channels").get<std::size_t>();
                    auto kernel = params.at("kernel").get<std::vector<std::size_t>>();
                    if (kernel.size() != 2)
                        throw ContractError(name + ": kernel must be [kh, kw]");
                    l.kernel_h = kernel[0];
                    l.kernel_w = kernel[1];
                    l.stride = params.value("stride", std::size_t{1});
                    l.pad = params.value("pad", std::size_t{0});
                    l.weights = load_ref(jl, "weights", name);
                    l.bias = load_ref(jl, "bias", name);
                    l.has_weights = true;
                    break;
                }
                case LayerKind::Dense: {
                    l.out_features = params.at("out_features").get<std::size_t>();
                    l.weights = load_ref(jl, "weights", name);
                    l.bias = load_ref(jl, "bias", name);
                    l.has_weights = true;
                    break;
                }
                case LayerKind::MaxPool: {
                    auto window = params.at("window").get<std::vector<std::size_t>>();
                    if (window.size() != 2)
                        throw ContractError(name + ": window must be [h, w]");
                    l.window_h = window[0];
                    l.window_w = window[1];
                    if (params.contains("stride")) {
                        l.pool_stride_h = params.at("stride").get<std::size_t>();
                        l.pool_stride_w = l.pool_stride_h;
                    }
                    break;
                }
                case LayerKind::Add: {
                    l.inputs = params.at("inputs").get<std::vector<std::string>>();
                    break;
                }
                default:
                    break;
            }
            net.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": manifest schema error: " + e.what());
    }

    finalize_network(net);
    return net;
}

Tensor eval_layer(const NetworkSpec& net, const LayerSpec& layer,
                  const std::vector<const Tensor*>& inputs) {
    const Tensor& x = *inputs.at(0);
    const std::size_t n = x.shape.at(0);

    auto out_tensor = [&](Layout layout) {
        std::vector<std::size_t> s = layer.out_shape;
        s.insert(s.begin(), n);
        return Tensor(s, layout);
    };

    switch (layer.kind) {
        case LayerKind::Conv2d: {
            const std::size_t ci = x.shape[1], hi = x.shape[2], wi = x.shape[3];
            Tensor y = out_tensor(Layout::Nchw);
            const std::size_t co = layer.out_shape[0], ho = layer.out_shape[1],
                              wo = layer.out_shape[2];
            const long pad = static_cast<long>(layer.pad);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t oc = 0; oc < co; ++oc) {
                    const float* w = layer.weights.data.data() + oc * ci * layer.kernel_h * layer.kernel_w;
                    for (std::size_t oy = 0; oy < ho; ++oy)
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            double acc = layer.bias.data[oc];
                            const long y0 = static_cast<long>(oy * layer.stride) - pad;
                            const long x0 = static_cast<long>(ox * layer.stride) - pad;
                            for (std::size_t ic = 0; ic < ci; ++ic)
                                for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                                    const long iy = y0 + static_cast<long>(ky);
                                    if (iy < 0 || iy >= static_cast<long>(hi)) continue;
                                    for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                                        const long ix = x0 + static_cast<long>(kx);
                                        if (ix < 0 || ix >= static_cast<long>(wi)) continue;
                                        acc += static_cast<double>(
                                                   x.data[x.offset4(b, ic, iy, ix)]) *
                                               w[(ic * layer.kernel_h + ky) * layer.kernel_w + kx];
                                    }
                                }
                            y.data[y.offset4(b, oc, oy, ox)] = static_cast<float>(acc);
                        }
                }
            return y;
        }
        case LayerKind::Dense: {
            const std::size_t fi = x.shape[1], fo = layer.out_features;
            Tensor y = out_tensor(Layout::Matrix);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t k = 0; k < fo; ++k) {
                    double acc = layer.bias.data[k];
                    const float* w = layer.weights.data.data() + k * fi;
                    for (std::size_t j = 0; j < fi; ++j)
                        acc += static_cast<double>(x.data[b * fi + j]) * w[j];
                    y.data[b * fo + k] = static_cast<float>(acc);
                }
            return y;
        }
        case LayerKind::Relu: {
            Tensor y = x;
            for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
            return y;
        }
        case LayerKind::MaxPool: {
            const std::size_t c = x.shape[1];
            Tensor y = out_tensor(Layout::Nchw);
            const std::size_t ho = layer.out_shape[1], wo = layer.out_shape[2];
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t oy = 0; oy < ho; ++oy)
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            float best = -std::numeric_limits<float>::infinity();
                            for (std::size_t ky = 0; ky < layer.window_h; ++ky)
                                for (std::size_t kx = 0; kx < layer.window_w; ++kx) {
                                    float v = x.data[x.offset4(b, ch,
                                                               oy * layer.pool_stride_h + ky,
                                                               ox * layer.pool_stride_w + kx)];
                                    if (v > best) best = v;
                                }
                            y.data[y.offset4(b, ch, oy, ox)] = best;
                        }
            return y;
        }
        case LayerKind::AvgPoolGlobal: {
            const std::size_t c = x.shape[1], h = x.shape[2], w = x.shape[3];
            Tensor y = out_tensor(Layout::Matrix);
            const double inv = 1.0 / static_cast<double>(h * w);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double acc = 0.0;
                    const float* base = x.data.data() + x.offset4(b, ch, 0, 0);
                    for (std::size_t i = 0; i < h * w; ++i) acc += base[i];
                    y.data[b * c + ch] = static_cast<float>(acc * inv);
                }
            return y;
        }
        case LayerKind::Add: {
            const Tensor& other = *inputs.at(1);
            Tensor y = x;
            for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += other.data[i];
            return y;
        }
        case LayerKind::Flatten: {
            Tensor y = x;
            y.shape = {n, layer.out_shape[0]};
            y.layout = Layout::Matrix;
            return y;
        }
        case LayerKind::SoftmaxHead:
            return softmax_rows(x);
    }
    throw ContractError(layer.name + ": unknown layer kind");
}

ForwardResult forward(const NetworkSpec& net, const Tensor& batch, bool want_trace) {
    if (batch.shape.size() != 4)
        throw ContractError("forward: batch must be NCHW, got " + shape_to_string(batch.shape));
    std::vector<std::size_t> chw(batch.shape.begin() + 1, batch.shape.end());
    if (chw != net.input_shape)
        throw ContractError("forward: batch shape " + shape_to_string(chw) +
                            " does not match network input " + shape_to_string(net.input_shape));

    std::map<std::string, Tensor> outputs;
    auto producer = [&](const std::string& name) -> const Tensor* {
        if (name == "input") return &batch;
        auto it = outputs.find(name);
        if (it == outputs.end())
            throw ContractError("layer input '" + name + "' evaluated out of order");
        return &it->second;
    };

    for (const LayerSpec& l : net.layers) {
        std::vector<const Tensor*> ins;
        ins.reserve(l.inputs.size());
        for (const auto& name : l.inputs) ins.push_back(producer(name));
        outputs[l.name] = eval_layer(net, l, ins);
    }

    ForwardResult result;
    result.logits = outputs.at(net.layers[net.logits_index()].name);
    if (want_trace) {
        ActivationTrace trace;
        trace.input = batch;
        trace.batch = batch.shape[0];
        for (const LayerSpec& l : net.layers) trace.order.push_back(l.name);
        trace.outputs = std::move(outputs);
        result.trace = std::move(trace);
    }
    return result;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty())
        throw ContractError("softmax: empty input");
    double max_v = logits[0];
    for (double v : logits) {
        if (std::isnan(v))
            throw NumericError("softmax: NaN input");
        max_v = std::max(max_v, v);
    }
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_v);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.shape.size() != 2)
        throw ContractError("softmax_rows: expected (N,K) input");
    Tensor out = logits;
    const std::size_t n = logits.shape[0], k = logits.shape[1];
    for (std::size_t b = 0; b < n; ++b) {
        std::vector<double> row(k);
        for (std::size_t i = 0; i < k; ++i) row[i] = logits.data[b * k + i];
        std::vector<double> p = softmax(row);
        for (std::size_t i = 0; i < k; ++i) out.data[b * k + i] = static_cast<float>(p[i]);
    }
    return out;
}

} // namespace netlens
