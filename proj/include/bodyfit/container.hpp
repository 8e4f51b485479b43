#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "bodyfit/errors.hpp"
#include "bodyfit/linalg.hpp"

namespace bodyfit {

// On-disk tensor container ("RGFT"): named little-endian arrays of
// float64/int64. Byte layout documented in docs/container_format.md.

enum class Dtype : std::uint8_t { f64 = 0, i64 = 1 };

struct TensorArray {
    Dtype dtype = Dtype::f64;
    std::vector<std::uint64_t> shape;
    std::vector<double> f64;        // row-major, valid when dtype == f64
    std::vector<std::int64_t> i64;  // row-major, valid when dtype == i64

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    static TensorArray from_matrix(const Mat& m);
    static TensorArray from_vector(const Vec& v);
    static TensorArray from_scalar(double x);
    static TensorArray from_index_vector(const std::vector<std::int64_t>& v);

    // 2-D f64 array as an Eigen matrix (row-major payload order).
    Mat as_matrix() const;
    Vec as_vector() const;
    double as_scalar() const;
    std::vector<std::int64_t> as_index_vector() const;
};

class TensorContainer {
public:
    // Insert or replace; insertion order is preserved on write so that
    // serialization is deterministic.
    void set(const std::string& name, TensorArray array);

    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    const TensorArray& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, TensorArray> index_;
};

TensorContainer read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const TensorContainer& c);

}  // namespace bodyfit
