// Seeded stand-ins for learned parameters. Arrays are pure functions of
// (seed, name, shape): uniform on [-s, s] with s = 1/sqrt(fan_in).
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "capsroute/prng.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

class ParamBundle {
public:
    explicit ParamBundle(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Named array, uniform on [-s, s] with s = 1/sqrt(fan_in).
    Tensor uniform(std::string_view name, std::vector<std::size_t> shape,
                   std::size_t fan_in) const {
        if (fan_in == 0) throw std::invalid_argument("ParamBundle: fan_in must be positive");
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return scaled(name, std::move(shape), scale);
    }

    /// Named array, uniform on [-scale, scale).
    Tensor scaled(std::string_view name, std::vector<std::size_t> shape,
                  double scale) const {
        Tensor t(std::move(shape));
        const std::uint64_t key = rng::stream_key(seed_, name);
        auto out = t.data();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = rng::symmetric_double(rng::draw_u64(key, i), scale);
        }
        return t;
    }

private:
    std::uint64_t seed_;
};

}  // namespace capsroute
