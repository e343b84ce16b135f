#include "netlens/tensor.hpp"

#include <sstream>

#include "netlens/errors.hpp"

namespace netlens {

Tensor::Tensor(std::vector<std::size_t> s, Layout l)
    : shape(std::move(s)), layout(l) {
    data.assign(shape_product(shape), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<float> d, Layout l)
    : shape(std::move(s)), data(std::move(d)), layout(l) {
    validate_tensor(*this, "Tensor");
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream oss;
    oss << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) oss << ", ";
        oss << shape[i];
    }
    oss << ")";
    return oss.str();
}

void validate_tensor(const Tensor& t, const std::string& context) {
    for (std::size_t e : t.shape) {
        if (e == 0)
            throw ContractError(context + ": zero extent in shape " + shape_to_string(t.shape));
    }
    if (shape_product(t.shape) != t.data.size())
        throw ContractError(context + ": shape " + shape_to_string(t.shape) +
                            " does not match data length " + std::to_string(t.data.size()));
}

} // namespace netlens
