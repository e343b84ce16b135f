#include "netlens/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "netlens/errors.hpp"

namespace netlens {

namespace {

// Relevance buffers are double-precision for the whole backward pass;
// tensors are converted at the API boundary only.
using Buffer = std::vector<double>;

struct BackwardState {
    const NetworkSpec* net;
    const ActivationTrace* trace;
    std::map<std::string, Buffer> relevance; // keyed by producer name, "input" included
};

Buffer& buffer_for(BackwardState& st, const std::string& name) {
    auto it = st.relevance.find(name);
    if (it != st.relevance.end()) return it->second;
    std::size_t n;
    if (name == "input")
        n = st.trace->input.size();
    else
        n = st.trace->at(name).size();
    return st.relevance.emplace(name, Buffer(n, 0.0)).first->second;
}

const Tensor& activation_of(const BackwardState& st, const std::string& name) {
    if (name == "input") return st.trace->input;
    return st.trace->at(name);
}

void backward_dense(const LayerSpec& l, const Tensor& x, const Buffer& r_out, Buffer& r_in) {
    const std::size_t fi = x.shape[1];
    const std::size_t fo = l.out_features;
    for (std::size_t k = 0; k < fo; ++k) {
        if (r_out[k] == 0.0) continue;
        const float* w = l.weights.data.data() + k * fi;
        double z_sum = 0.0;
        for (std::size_t j = 0; j < fi; ++j) {
            double z = static_cast<double>(x.data[j]) * w[j];
            if (z > 0.0) z_sum += z;
        }
        double b = static_cast<double>(l.bias.data[k]);
        if (z_sum == 0.0) continue; // dead unit: relevance is dropped, not divided
        double denom = z_sum + (b > 0.0 ? b : 0.0) + kLrpEpsilon;
        double scale = r_out[k] / denom;
        for (std::size_t j = 0; j < fi; ++j) {
            double z = static_cast<double>(x.data[j]) * w[j];
            if (z > 0.0) r_in[j] += z * scale;
        }
    }
}

void backward_conv(const LayerSpec& l, const Tensor& x, const Buffer& r_out, Buffer& r_in) {
    const std::size_t ci = x.shape[1], hi = x.shape[2], wi = x.shape[3];
    const std::size_t co = l.out_shape[0], ho = l.out_shape[1], wo = l.out_shape[2];
    const long pad = static_cast<long>(l.pad);
    for (std::size_t oc = 0; oc < co; ++oc) {
        const float* w = l.weights.data.data() + oc * ci * l.kernel_h * l.kernel_w;
        const double bias_pos = std::max(0.0, static_cast<double>(l.bias.data[oc]));
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double r = r_out[(oc * ho + oy) * wo + ox];
                if (r == 0.0) continue;
                const long y0 = static_cast<long>(oy * l.stride) - pad;
                const long x0 = static_cast<long>(ox * l.stride) - pad;
                double z_sum = 0.0;
                for (std::size_t ic = 0; ic < ci; ++ic)
                    for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                        const long iy = y0 + static_cast<long>(ky);
                        if (iy < 0 || iy >= static_cast<long>(hi)) continue;
                        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
                            const long ix = x0 + static_cast<long>(kx);
                            if (ix < 0 || ix >= static_cast<long>(wi)) continue;
                            double z = static_cast<double>(x.data[x.offset4(0, ic, iy, ix)]) *
                                       w[(ic * l.kernel_h + ky) * l.kernel_w + kx];
                            if (z > 0.0) z_sum += z;
                        }
                    }
                if (z_sum == 0.0) continue;
                double scale = r / (z_sum + bias_pos + kLrpEpsilon);
                for (std::size_t ic = 0; ic < ci; ++ic)
                    for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                        const long iy = y0 + static_cast<long>(ky);
                        if (iy < 0 || iy >= static_cast<long>(hi)) continue;
                        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
                            const long ix = x0 + static_cast<long>(kx);
                            if (ix < 0 || ix >= static_cast<long>(wi)) continue;
                            std::size_t in_idx = (ic * hi + iy) * wi + ix;
                            double z = static_cast<double>(x.data[x.offset4(0, ic, iy, ix)]) *
                                       w[(ic * l.kernel_h + ky) * l.kernel_w + kx];
                            if (z > 0.0) r_in[in_idx] += z * scale;
                        }
                    }
            }
    }
}

void backward_maxpool(const LayerSpec& l, const Tensor& x, const Buffer& r_out, Buffer& r_in) {
    const std::size_t c = x.shape[1], hi = x.shape[2], wi = x.shape[3];
    const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double r = r_out[(ch * ho + oy) * wo + ox];
                if (r == 0.0) continue;
                // winner-take-all; first window cell in row-major order wins ties
                float best = -std::numeric_limits<float>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t ky = 0; ky < l.window_h; ++ky)
                    for (std::size_t kx = 0; kx < l.window_w; ++kx) {
                        std::size_t iy = oy * l.pool_stride_h + ky;
                        std::size_t ix = ox * l.pool_stride_w + kx;
                        float v = x.data[x.offset4(0, ch, iy, ix)];
                        if (v > best) {
                            best = v;
                            best_idx = (ch * hi + iy) * wi + ix;
                        }
                    }
                r_in[best_idx] += r;
            }
}

void backward_avgpool_global(const Tensor& x, const Buffer& r_out, Buffer& r_in) {
    const std::size_t c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double r = r_out[ch];
        if (r == 0.0) continue;
        const float* base = x.data.data() + x.offset4(0, ch, 0, 0);
        double z_sum = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) {
            double z = static_cast<double>(base[i]) * inv;
            if (z > 0.0) z_sum += z;
        }
        if (z_sum == 0.0) continue;
        double scale = r / (z_sum + kLrpEpsilon);
        for (std::size_t i = 0; i < h * w; ++i) {
            double z = static_cast<double>(base[i]) * inv;
            if (z > 0.0) r_in[ch * h * w + i] += z * scale;
        }
    }
}

void backward_add(const Tensor& a, const Tensor& b, const Buffer& r_out, Buffer& r_a,
                  Buffer& r_b) {
    for (std::size_t i = 0; i < r_out.size(); ++i) {
        double r = r_out[i];
        if (r == 0.0) continue;
        double za = std::max(0.0, static_cast<double>(a.data[i]));
        double zb = std::max(0.0, static_cast<double>(b.data[i]));
        double total = za + zb;
        if (total > 0.0) {
            r_a[i] += r * za / total;
            r_b[i] += r * zb / total;
        } else {
            r_a[i] += 0.5 * r;
            r_b[i] += 0.5 * r;
        }
    }
}

} // namespace

RelevanceMap explain(const NetworkSpec& net, const Tensor& input_chw,
                     std::size_t target_class, SeedMode seed_mode) {
    if (input_chw.shape != net.input_shape)
        throw ContractError("explain: input shape " + shape_to_string(input_chw.shape) +
                            " does not match network input " +
                            shape_to_string(net.input_shape));
    if (target_class >= net.classes)
        throw ContractError("explain: target class " + std::to_string(target_class) +
                            " out of range (classes=" + std::to_string(net.classes) + ")");

    Tensor batch = input_chw;
    batch.shape.insert(batch.shape.begin(), 1);
    batch.layout = Layout::Nchw;
    ForwardResult fwd = forward(net, batch, true);
    const ActivationTrace& trace = *fwd.trace;

    const std::size_t logits_idx = net.logits_index();
    if (net.layers[logits_idx].out_shape.size() != 1)
        throw ContractError("explain: network output is not a flat class-score layer");
    const std::string& logits_name = net.layers[logits_idx].name;

    BackwardState st{&net, &trace, {}};
    Buffer& seed_buf = buffer_for(st, logits_name);
    double seed = seed_mode == SeedMode::Logit
                      ? static_cast<double>(fwd.logits.data[target_class])
                      : 1.0;
    seed_buf[target_class] = seed;

    RelevanceMap map;
    map.target_class = target_class;
    map.seed_mode = seed_mode;
    map.seed_value = seed;

    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const LayerSpec& l = net.layers[i];
        if (l.kind == LayerKind::SoftmaxHead) continue; // seeded at the logits below it
        if (i > logits_idx) continue;

        const Buffer& r_out = buffer_for(st, l.name);
        const Tensor& x = activation_of(st, l.inputs[0]);

        switch (l.kind) {
            case LayerKind::Dense:
                backward_dense(l, x, r_out, buffer_for(st, l.inputs[0]));
                break;
            case LayerKind::Conv2d:
                backward_conv(l, x, r_out, buffer_for(st, l.inputs[0]));
                break;
            case LayerKind::Relu:
            case LayerKind::Flatten: {
                Buffer& r_in = buffer_for(st, l.inputs[0]);
                for (std::size_t j = 0; j < r_out.size(); ++j) r_in[j] += r_out[j];
                break;
            }
            case LayerKind::MaxPool:
                backward_maxpool(l, x, r_out, buffer_for(st, l.inputs[0]));
                break;
            case LayerKind::AvgPoolGlobal:
                backward_avgpool_global(x, r_out, buffer_for(st, l.inputs[0]));
                break;
            case LayerKind::Add:
                backward_add(x, activation_of(st, l.inputs[1]), r_out,
                             buffer_for(st, l.inputs[0]), buffer_for(st, l.inputs[1]));
                break;
            case LayerKind::SoftmaxHead:
                break;
        }

        for (const std::string& in : l.inputs) {
            for (double v : buffer_for(st, in))
                if (std::isnan(v))
                    throw NumericError(l.name + ": relevance propagation produced NaN");
        }
    }

    auto to_tensor = [&](const Buffer& buf, std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<float>(buf[i]);
        return t;
    };

    for (std::size_t i = 0; i <= logits_idx; ++i) {
        const LayerSpec& l = net.layers[i];
        auto it = st.relevance.find(l.name);
        if (it == st.relevance.end()) continue;
        map.layer_relevance[l.name] = to_tensor(it->second, l.out_shape);
    }

    const Buffer& input_r = buffer_for(st, "input");
    map.input_relevance = to_tensor(input_r, net.input_shape);
    map.input_relevance.layout = Layout::Chw;

    double total = 0.0;
    for (double v : input_r) total += v;
    map.conservation_gap = std::abs(total - seed) / std::max(std::abs(seed), 1e-12);
    map.conservation_break = map.conservation_gap > 1e-4;
    return map;
}

} // namespace netlens
