#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "rbd/common.hpp"

namespace rbd {

// dense row-major value block, rank <= 4
template <class T>
struct tensor {
    std::array<int, 4> dims{1, 1, 1, 1};
    int rank = 0;
    std::vector<T> v;

    tensor() = default;
    explicit tensor(std::initializer_list<int> shape) { reshape(shape); }

    void reshape(std::initializer_list<int> shape) {
        if (shape.size() == 0 || shape.size() > 4)
            throw shape_error("tensor rank must be 1..4");
        rank = static_cast<int>(shape.size());
        dims = {1, 1, 1, 1};
        size_t total = 1;
        int i = 0;
        for (int d : shape) {
            if (d <= 0) throw shape_error("tensor dims must be positive");
            dims[i++] = d;
            total *= static_cast<size_t>(d);
        }
        v.assign(total, T(0));
    }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }

    bool same_shape(const tensor& o) const { return rank == o.rank && dims == o.dims; }

    std::string shape_str() const {
        std::string s = "(";
        for (int i = 0; i < rank; ++i) s += (i ? "," : "") + std::to_string(dims[i]);
        return s + ")";
    }
};

}  // namespace rbd
