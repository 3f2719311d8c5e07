#include "pathohr/numeric/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "pathohr/error.hpp"

namespace pathohr {

Matrix& ParameterSet::add(std::string name, Matrix value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  entries_.push_back(Entry{std::move(name), std::move(value)});
  return entries_.back().value;
}

Matrix& ParameterSet::add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
  return add(std::move(name), std::move(m));
}

Matrix& ParameterSet::add_constant(std::string name, std::size_t rows, std::size_t cols, double fill) {
  return add(std::move(name), Matrix(rows, cols, fill));
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw IndexError("unknown parameter: " + std::string(name));
}

const Matrix& ParameterSet::at(std::string_view name) const { return entries_[index_of(name)].value; }
Matrix& ParameterSet::at(std::string_view name) { return entries_[index_of(name)].value; }

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& e : entries_) flat.insert(flat.end(), e.value.data().begin(), e.value.data().end());
  return flat;
}

void ParameterSet::assign_flat(std::span<const double> values) {
  if (values.size() != scalar_count()) {
    throw DimensionError("assign_flat: " + std::to_string(values.size()) + " values for " +
                         std::to_string(scalar_count()) + " parameters");
  }
  std::size_t offset = 0;
  for (auto& e : entries_) {
    auto dst = e.value.data();
    std::copy(values.begin() + offset, values.begin() + offset + dst.size(), dst.begin());
    offset += dst.size();
  }
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, Matrix(e.value.rows(), e.value.cols()));
  return out;
}

bool operator==(const ParameterSet::Entry& a, const ParameterSet::Entry& b) {
  return a.name == b.name && a.value == b.value;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) { return a.entries_ == b.entries_; }

BoundParameters::BoundParameters(ad::Tape& tape, const ParameterSet& params) : tape_(&tape), params_(&params) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) vars_.push_back(tape.leaf(e.value));
}

ad::Var BoundParameters::operator[](std::string_view name) const {
  return vars_[params_->index_of(name)];
}

ParameterSet BoundParameters::gradients() const {
  ParameterSet out;
  for (std::size_t i = 0; i < vars_.size(); ++i) out.add(params_->entries()[i].name, tape_->grad(vars_[i]));
  return out;
}

}  // namespace pathohr
