#include "netlens/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "netlens/errors.hpp"
#include "netlens/io_util.hpp"

namespace netlens {

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kAlign = 64;

bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

void swap_payload_bytes(std::vector<float>& data) {
    for (float& f : data) {
        unsigned char* b = reinterpret_cast<unsigned char*>(&f);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
    }
}

std::string shape_literal(const std::vector<std::size_t>& shape) {
    std::ostringstream oss;
    oss << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) oss << ", ";
        oss << shape[i];
    }
    if (shape.size() == 1) oss << ",";
    oss << ")";
    return oss.str();
}

// Pulls the value following 'key' out of the header dict. The parser is
// deliberately loose about spacing and key order but strict about content.
std::string dict_value(const std::string& dict, const std::string& key,
                       const std::filesystem::path& path) {
    const std::string quoted = "'" + key + "'";
    std::size_t pos = dict.find(quoted);
    if (pos == std::string::npos)
        throw FormatError(path.string() + ": NPY header missing key " + quoted);
    pos = dict.find(':', pos + quoted.size());
    if (pos == std::string::npos)
        throw FormatError(path.string() + ": NPY header missing ':' after " + quoted);
    ++pos;
    while (pos < dict.size() && dict[pos] == ' ') ++pos;
    if (pos >= dict.size())
        throw FormatError(path.string() + ": NPY header truncated after " + quoted);
    if (dict[pos] == '\'') {
        std::size_t end = dict.find('\'', pos + 1);
        if (end == std::string::npos)
            throw FormatError(path.string() + ": unterminated string in NPY header");
        return dict.substr(pos + 1, end - pos - 1);
    }
    if (dict[pos] == '(') {
        std::size_t end = dict.find(')', pos);
        if (end == std::string::npos)
            throw FormatError(path.string() + ": unterminated tuple in NPY header");
        return dict.substr(pos, end - pos + 1);
    }
    std::size_t end = dict.find_first_of(",}", pos);
    if (end == std::string::npos)
        throw FormatError(path.string() + ": malformed NPY header value for " + quoted);
    std::string v = dict.substr(pos, end - pos);
    while (!v.empty() && v.back() == ' ') v.pop_back();
    return v;
}

std::vector<std::size_t> parse_shape_tuple(const std::string& literal,
                                           const std::filesystem::path& path) {
    if (literal.size() < 2 || literal.front() != '(' || literal.back() != ')')
        throw FormatError(path.string() + ": malformed shape tuple " + literal);
    std::vector<std::size_t> shape;
    std::string inner = literal.substr(1, literal.size() - 2);
    std::stringstream ss(inner);
    std::string token;
    while (std::getline(ss, token, ',')) {
        std::size_t a = token.find_first_not_of(' ');
        if (a == std::string::npos) continue;
        std::size_t b = token.find_last_not_of(' ');
        token = token.substr(a, b - a + 1);
        if (token.empty()) continue;
        std::size_t idx = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(token, &idx);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": non-integer extent '" + token + "' in shape");
        }
        if (idx != token.size())
            throw FormatError(path.string() + ": non-integer extent '" + token + "' in shape");
        shape.push_back(static_cast<std::size_t>(v));
    }
    return shape;
}

} // namespace

std::string npy_header_bytes(const std::vector<std::size_t>& shape) {
    std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " +
                       shape_literal(shape) + ", }";
    // magic(6) + version(2) + header-len field(2) + dict + padding + '\n',
    // total a multiple of 64
    std::size_t base = kMagicLen + 2 + 2;
    std::size_t unpadded = base + dict.size() + 1;
    std::size_t total = ((unpadded + kAlign - 1) / kAlign) * kAlign;
    std::size_t pad = total - unpadded;
    dict.append(pad, ' ');
    dict.push_back('\n');
    if (dict.size() > 0xFFFF)
        throw ContractError("NPY header too long for v1.0: shape " + shape_to_string(shape));

    std::string header;
    header.reserve(total);
    header.append(kMagic, kMagicLen);
    header.push_back('\x01');
    header.push_back('\x00');
    header.push_back(static_cast<char>(dict.size() & 0xFF));
    header.push_back(static_cast<char>((dict.size() >> 8) & 0xFF));
    header += dict;
    return header;
}

Tensor read_npy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path.string() + ": cannot open for reading");

    char magic[kMagicLen + 2];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw FormatError(path.string() + ": not an NPY file (bad magic)");
    if (magic[kMagicLen] != '\x01' || magic[kMagicLen + 1] != '\x00')
        throw FormatError(path.string() + ": unsupported NPY version " +
                          std::to_string(static_cast<int>(magic[kMagicLen])) + "." +
                          std::to_string(static_cast<int>(magic[kMagicLen + 1])));

    unsigned char len_bytes[2];
    in.read(reinterpret_cast<char*>(len_bytes), 2);
    if (!in)
        throw FormatError(path.string() + ": truncated NPY header length");
    std::size_t header_len = static_cast<std::size_t>(len_bytes[0]) |
                             (static_cast<std::size_t>(len_bytes[1]) << 8);

    std::string dict(header_len, '\0');
    in.read(dict.data(), static_cast<std::streamsize>(header_len));
    if (!in)
        throw FormatError(path.string() + ": truncated NPY header dict");

    std::string descr = dict_value(dict, "descr", path);
    if (descr != "<f4") {
        // '|f4' etc. would be endian-ambiguous; only explicit LE accepted
        throw FormatError(path.string() + ": unsupported dtype '" + descr +
                          "' (only '<f4' is supported)");
    }
    std::string order = dict_value(dict, "fortran_order", path);
    if (order == "True")
        throw FormatError(path.string() + ": Fortran-order arrays are not supported");
    if (order != "False")
        throw FormatError(path.string() + ": malformed fortran_order '" + order + "'");

    std::vector<std::size_t> shape = parse_shape_tuple(dict_value(dict, "shape", path), path);
    for (std::size_t e : shape)
        if (e == 0)
            throw FormatError(path.string() + ": zero extent in shape");

    std::size_t count = shape_product(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(count);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
        throw FormatError(path.string() + ": truncated payload, expected " +
                          std::to_string(count * sizeof(float)) + " bytes");
    if (!host_is_little_endian())
        swap_payload_bytes(t.data);
    return t;
}

void write_npy(const Tensor& t, const std::filesystem::path& path) {
    for (std::size_t e : t.shape)
        if (e == 0)
            throw ContractError(path.string() + ": refusing to write zero-extent shape " +
                                shape_to_string(t.shape));
    if (shape_product(t.shape) != t.data.size())
        throw ContractError(path.string() + ": shape/data length mismatch");
    if (t.shape.empty())
        throw ContractError(path.string() + ": refusing to write rank-0 tensor");

    std::string header = npy_header_bytes(t.shape);
    std::string body;
    body.reserve(header.size() + t.data.size() * sizeof(float));
    body += header;
    if (host_is_little_endian()) {
        body.append(reinterpret_cast<const char*>(t.data.data()),
                    t.data.size() * sizeof(float));
    } else {
        std::vector<float> swapped = t.data;
        swap_payload_bytes(swapped);
        body.append(reinterpret_cast<const char*>(swapped.data()),
                    swapped.size() * sizeof(float));
    }
    atomic_write_file(path, body);
}

} // namespace netlens
