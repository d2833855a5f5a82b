#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfd {

inline void check(bool condition, const std::string& message) {
  if (!condition) throw std::runtime_error(message);
}

// Dense row-major tensor of doubles, rank <= 4. No views, no strides; all
// model math runs in double so comparisons against central finite
// differences stay well conditioned.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> dims, double fill = 0.0)
      : dims_(std::move(dims)), data_(checked_count(dims_), fill) {}

  static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

  static Tensor row(std::vector<double> values) {
    Tensor t({1, static_cast<int>(values.size())});
    t.data_.assign(values.begin(), values.end());
    return t;
  }

  static Tensor vec(std::vector<double> values) {
    Tensor t({static_cast<int>(values.size())});
    t.data_.assign(values.begin(), values.end());
    return t;
  }

  bool empty() const { return data_.empty(); }
  const std::vector<int>& dims() const { return dims_; }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int i, int j) {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i) * dims_[1] + j];
  }
  double at(int i, int j) const {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i) * dims_[1] + j];
  }
  double& at(int i, int j, int k) {
    assert(rank() == 3);
    return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }
  double at(int i, int j, int k) const {
    assert(rank() == 3);
    return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    assert(rank() == 4);
    return data_[((static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
  }
  double at(int i, int j, int k, int l) const {
    assert(rank() == 4);
    return data_[((static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  static size_t checked_count(const std::vector<int>& dims) {
    size_t n = 1;
    for (int d : dims) {
      check(d >= 0, "tensor dimension must be nonnegative");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  std::vector<int> dims_;
  std::vector<double> data_;
};

}  // namespace cfd
