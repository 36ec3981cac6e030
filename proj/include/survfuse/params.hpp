#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "survfuse/autodiff.hpp"

namespace survfuse {

struct Parameter {
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Named learnable tensors. Iteration order is lexicographic by name, which
// is also the canonical checkpoint order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Matrix value);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  using Map = std::map<std::string, Parameter, std::less<>>;
  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  // Round every value to the nearest 32-bit float (checkpoint precision).
  void round_to_float();

 private:
  Map params_;
};

using Rng = std::mt19937_64;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound,
                      Rng& rng);
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                     Rng& rng);

}  // namespace survfuse
