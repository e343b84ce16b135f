#ifndef NETLENS_NETWORK_HPP
#define NETLENS_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netlens/tensor.hpp"

namespace netlens {

enum class LayerKind {
    Conv2d,
    Dense,
    Relu,
    MaxPool,
    AvgPoolGlobal,
    Add,
    Flatten,
    SoftmaxHead,
};

std::string layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Relu;

    // conv2d
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;

    // dense
    std::size_t out_features = 0;

    // maxpool
    std::size_t window_h = 0, window_w = 0;
    std::size_t pool_stride_h = 0, pool_stride_w = 0;

    // Producer layers. Single-input kinds have one entry ("input" refers to
    // the network input); add has exactly two.
    std::vector<std::string> inputs;

    Tensor weights; // conv: (out,in,kh,kw); dense: (out,in)
    Tensor bias;    // (out)
    bool has_weights = false;

    // Output shape without the batch axis, filled by shape inference.
    std::vector<std::size_t> out_shape;
};

struct NetworkSpec {
    std::vector<std::size_t> input_shape; // (C,H,W)
    std::size_t classes = 5;
    std::vector<LayerSpec> layers; // topological order

    const LayerSpec* find(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;
    // Layer producing the logits: the one feeding softmax_head when present,
    // otherwise the last layer.
    std::size_t logits_index() const;
};

struct ActivationTrace {
    Tensor input; // the NCHW batch the trace was recorded from
    std::vector<std::string> order;
    std::map<std::string, Tensor> outputs;
    std::size_t batch = 0;

    const Tensor& at(const std::string& name) const;
};

struct ForwardResult {
    Tensor logits; // (N, classes)
    std::optional<ActivationTrace> trace;
};

// Loads a manifest JSON plus referenced NPY weights. Batchnorm entries are
// folded into the preceding conv and removed; every weight is shape-checked
// against its layer's declared parameters.
NetworkSpec load_network(const std::filesystem::path& manifest_path);

// Validates graph structure and fills out_shape on every layer. load_network
// calls this; in-memory networks built by tests call it directly.
void finalize_network(NetworkSpec& net);

ForwardResult forward(const NetworkSpec& net, const Tensor& batch, bool want_trace);

// Evaluates one layer given its input activations; forward is a fold over
// this, and tests replay it from recorded activations.
Tensor eval_layer(const NetworkSpec& net, const LayerSpec& layer,
                  const std::vector<const Tensor*>& inputs);

std::vector<double> softmax(const std::vector<double>& logits);
Tensor softmax_rows(const Tensor& logits);

} // namespace netlens

#endif
