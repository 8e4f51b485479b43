#include "bodyfit/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "bodyfit/hash.hpp"

namespace bodyfit {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void append_le(std::vector<unsigned char>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = sizeof(T); i-- > 0;) out.push_back(buf[i]);
    } else {
        out.insert(out.end(), buf, buf + sizeof(T));
    }
}

class Reader {
public:
    Reader(const unsigned char* data, std::size_t size, std::string origin)
        : data_(data), size_(size), origin_(std::move(origin)) {}

    std::size_t offset() const { return pos_; }

    void require(std::size_t n, const std::string& what) const {
        if (pos_ + n > size_) {
            throw FormatError(origin_ + ": truncated while reading " + what +
                              " at byte offset " + std::to_string(pos_) +
                              " (need " + std::to_string(n) + " bytes, have " +
                              std::to_string(size_ - pos_) + ")");
        }
    }

    template <typename T>
    T read_le(const std::string& what) {
        require(sizeof(T), what);
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, data_ + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
                std::swap(buf[i], buf[sizeof(T) - 1 - i]);
        }
        T value;
        std::memcpy(&value, buf, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string read_bytes(std::size_t n, const std::string& what) {
        require(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    const unsigned char* cursor() const { return data_ + pos_; }
    void skip(std::size_t n) { pos_ += n; }
    bool exhausted() const { return pos_ == size_; }
    const std::string& origin() const { return origin_; }

private:
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string origin_;
};

}  // namespace

TensorArray TensorArray::from_matrix(const Mat& m) {
    TensorArray a;
    a.dtype = Dtype::f64;
    a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    a.f64.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            a.f64[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return a;
}

TensorArray TensorArray::from_vector(const Vec& v) {
    TensorArray a;
    a.dtype = Dtype::f64;
    a.shape = {static_cast<std::uint64_t>(v.size())};
    a.f64.assign(v.data(), v.data() + v.size());
    return a;
}

TensorArray TensorArray::from_scalar(double x) {
    TensorArray a;
    a.dtype = Dtype::f64;
    a.shape = {1};
    a.f64 = {x};
    return a;
}

TensorArray TensorArray::from_index_vector(const std::vector<std::int64_t>& v) {
    TensorArray a;
    a.dtype = Dtype::i64;
    a.shape = {static_cast<std::uint64_t>(v.size())};
    a.i64 = v;
    return a;
}

Mat TensorArray::as_matrix() const {
    if (dtype != Dtype::f64 || shape.size() != 2)
        throw FormatError("array is not a 2-D float64 matrix");
    Mat m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = f64[static_cast<std::size_t>(r * m.cols() + c)];
    return m;
}

Vec TensorArray::as_vector() const {
    if (dtype != Dtype::f64 || shape.size() != 1)
        throw FormatError("array is not a 1-D float64 vector");
    return Eigen::Map<const Vec>(f64.data(), static_cast<Eigen::Index>(f64.size()));
}

double TensorArray::as_scalar() const {
    if (dtype != Dtype::f64 || numel() != 1)
        throw FormatError("array is not a float64 scalar");
    return f64[0];
}

std::vector<std::int64_t> TensorArray::as_index_vector() const {
    if (dtype != Dtype::i64 || shape.size() != 1)
        throw FormatError("array is not a 1-D int64 vector");
    return i64;
}

void TensorContainer::set(const std::string& name, TensorArray array) {
    const std::uint64_t n = array.numel();
    const std::size_t have = array.dtype == Dtype::f64 ? array.f64.size() : array.i64.size();
    if (have != n)
        throw FormatError("array '" + name + "': payload has " + std::to_string(have) +
                          " elements but shape implies " + std::to_string(n));
    if (index_.count(name) == 0) order_.push_back(name);
    index_[name] = std::move(array);
}

const TensorArray& TensorContainer::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError("container has no array named '" + name + "'");
    return it->second;
}

TensorContainer read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    Reader r(bytes.data(), bytes.size(), path.string());

    const std::string magic = r.read_bytes(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic at byte offset 0 (expected \"RGFT\")");
    const auto version = r.read_le<std::uint8_t>("version");
    if (version != kVersion)
        throw FormatError(path.string() + ": unsupported container version " +
                          std::to_string(version) + " at byte offset 4 (supported: 1)");
    r.read_bytes(3, "header padding");
    const auto count = r.read_le<std::uint64_t>("array count");

    TensorContainer c;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t entry_offset = r.offset();
        const auto name_len = r.read_le<std::uint32_t>("name length");
        if (name_len == 0)
            throw FormatError(path.string() + ": empty array name at byte offset " +
                              std::to_string(entry_offset));
        const std::string name = r.read_bytes(name_len, "array name");
        if (c.contains(name))
            throw FormatError(path.string() + ": duplicate array name '" + name +
                              "' at byte offset " + std::to_string(entry_offset));
        TensorArray a;
        const auto dtype_raw = r.read_le<std::uint8_t>("dtype of '" + name + "'");
        if (dtype_raw > 1)
            throw FormatError(path.string() + ": array '" + name + "': unknown dtype " +
                              std::to_string(dtype_raw) + " at byte offset " +
                              std::to_string(r.offset() - 1));
        a.dtype = static_cast<Dtype>(dtype_raw);
        const auto ndim = r.read_le<std::uint8_t>("rank of '" + name + "'");
        r.read_bytes(2, "array padding");
        a.shape.resize(ndim);
        for (std::uint8_t d = 0; d < ndim; ++d)
            a.shape[d] = r.read_le<std::uint64_t>("dims of '" + name + "'");

        const std::uint64_t n = a.numel();
        r.require(static_cast<std::size_t>(n) * 8, "payload of '" + name + "'");
        if (a.dtype == Dtype::f64) {
            a.f64.resize(n);
            for (std::uint64_t k = 0; k < n; ++k) {
                std::uint64_t raw;
                std::memcpy(&raw, r.cursor() + k * 8, 8);
                if constexpr (std::endian::native == std::endian::big)
                    raw = __builtin_bswap64(raw);
                a.f64[k] = std::bit_cast<double>(raw);
            }
        } else {
            a.i64.resize(n);
            for (std::uint64_t k = 0; k < n; ++k) {
                std::uint64_t raw;
                std::memcpy(&raw, r.cursor() + k * 8, 8);
                if constexpr (std::endian::native == std::endian::big)
                    raw = __builtin_bswap64(raw);
                a.i64[k] = std::bit_cast<std::int64_t>(raw);
            }
        }
        r.skip(static_cast<std::size_t>(n) * 8);
        c.set(name, std::move(a));
    }
    if (!r.exhausted())
        throw FormatError(path.string() + ": " +
                          std::to_string(bytes.size() - r.offset()) +
                          " trailing bytes after last array (byte offset " +
                          std::to_string(r.offset()) + ")");
    return c;
}

void write_container(const std::filesystem::path& path, const TensorContainer& c) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    out.insert(out.end(), {0, 0, 0});
    append_le<std::uint64_t>(out, c.size());

    for (const auto& name : c.names()) {
        const TensorArray& a = c.at(name);
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<unsigned char>(a.dtype));
        out.push_back(static_cast<unsigned char>(a.shape.size()));
        out.insert(out.end(), {0, 0});
        for (auto d : a.shape) append_le<std::uint64_t>(out, d);
        if (a.dtype == Dtype::f64) {
            for (double x : a.f64) append_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
        } else {
            for (std::int64_t x : a.i64)
                append_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write to '" + path.string() + "'");
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for hashing");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return s;
}

}  // namespace bodyfit
