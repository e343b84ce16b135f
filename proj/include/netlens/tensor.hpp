#ifndef NETLENS_TENSOR_HPP
#define NETLENS_TENSOR_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace netlens {

enum class Layout { Chw, Nchw, Matrix, Vector };

// Dense float32 array in row-major order. The universal carrier for images,
// activations, weights and heatmaps.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;
    Layout layout = Layout::Matrix;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, Layout l = Layout::Matrix);
    Tensor(std::vector<std::size_t> s, std::vector<float> d, Layout l = Layout::Matrix);

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t extent(std::size_t axis) const { return shape.at(axis); }

    float& at(std::size_t i) { return data[i]; }
    float at(std::size_t i) const { return data[i]; }

    // Row-major offset helpers for the common ranks.
    std::size_t offset3(std::size_t c, std::size_t h, std::size_t w) const {
        return (c * shape[1] + h) * shape[2] + w;
    }
    std::size_t offset4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

// Throws ContractError when product(shape) != data length or an extent is 0.
void validate_tensor(const Tensor& t, const std::string& context);

} // namespace netlens

#endif
