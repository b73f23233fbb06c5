#pragma once

// Compensated (Neumaier) accumulation over flat real vectors. Complex data is
// accumulated as interleaved (re, im) pairs.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ergolab {

inline void neumaier_add(double& sum, double& comp, double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
        comp += (sum - t) + x;
    } else {
        comp += (x - t) + sum;
    }
    sum = t;
}

class CompensatedScalar {
public:
    void add(double x) { neumaier_add(sum_, comp_, x); }
    void merge(const CompensatedScalar& other) {
        add(other.sum_);
        add(other.comp_);
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

class CompensatedVector {
public:
    CompensatedVector() = default;
    explicit CompensatedVector(std::size_t width) : sum_(width, 0.0), comp_(width, 0.0) {}

    std::size_t width() const { return sum_.size(); }

    void add(std::span<const double> x) {
        for (std::size_t i = 0; i < sum_.size(); ++i) neumaier_add(sum_[i], comp_[i], x[i]);
    }

    // Folds another accumulator in: its running sum first, then its compensation.
    void merge(const CompensatedVector& other) {
        for (std::size_t i = 0; i < sum_.size(); ++i) {
            neumaier_add(sum_[i], comp_[i], other.sum_[i]);
            neumaier_add(sum_[i], comp_[i], other.comp_[i]);
        }
    }

    std::vector<double> value() const {
        std::vector<double> out(sum_.size());
        for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = sum_[i] + comp_[i];
        return out;
    }

    std::vector<double> divided_value(double d) const {
        std::vector<double> out(sum_.size());
        for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = (sum_[i] + comp_[i]) / d;
        return out;
    }

private:
    std::vector<double> sum_;
    std::vector<double> comp_;
};

} // namespace ergolab
