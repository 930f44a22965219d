#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "iesis/common.hpp"

namespace iesis {

// Deterministic random stream. Normal draws use Box-Muller on raw mt19937_64
// output, so a given (seed, call sequence) reproduces bitwise on any platform.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        // 53-bit mantissa in [0,1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) // avoid log(0)
            u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    VectorXd normal_vector(Eigen::Index n) {
        VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = normal();
        return v;
    }

    MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i)
                m(i, j) = normal();
        return m;
    }

    std::uint64_t raw() { return gen_(); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// One master seed, independent named streams ("prior", "xi/3", ...): reruns
// with the same seed replay every stream regardless of consumption order.
class RngFactory {
  public:
    explicit RngFactory(std::uint64_t master_seed) : master_(master_seed) {}

    RngStream stream(std::string_view name) const {
        return RngStream(master_ ^ fnv1a(name));
    }

    RngStream stream(std::string_view name, long index) const {
        return stream(std::string(name) + "/" + std::to_string(index));
    }

    RngStream stream(std::string_view name, long index_a, long index_b) const {
        return stream(std::string(name) + "/" + std::to_string(index_a) + "/" +
                      std::to_string(index_b));
    }

    std::uint64_t master_seed() const { return master_; }

  private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    std::uint64_t master_;
};

} // namespace iesis
