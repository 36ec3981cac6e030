#include "survfuse/params.hpp"

#include "survfuse/error.hpp"

namespace survfuse {

Parameter& ParamStore::add(const std::string& name, Matrix value) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw SchemaError("duplicate parameter name: " + name);
  it->second.value = std::move(value);
  it->second.zero_grad();
  return it->second;
}

Parameter& ParamStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw SchemaError("unknown parameter: " + std::string(name));
  return it->second;
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw SchemaError("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParamStore::contains(std::string_view name) const {
  return params_.find(name) != params_.end();
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::round_to_float() {
  for (auto& [name, p] : params_)
    p.value = p.value.cast<float>().cast<double>();
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound,
                      Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                     Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace survfuse
