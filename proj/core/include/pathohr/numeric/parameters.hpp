#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pathohr/numeric/matrix.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/numeric/tape.hpp"

namespace pathohr {

/// Ordered collection of named parameter matrices. Order is insertion order
/// and defines the flattening used by optimizers and gradient checks.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Matrix value;
  };

  /// Adds a parameter; names must be unique.
  Matrix& add(std::string name, Matrix value);
  /// Xavier-uniform (rows = fan_in, cols = fan_out) drawn from rng.
  Matrix& add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, RngStream& rng);
  Matrix& add_constant(std::string name, std::size_t rows, std::size_t cols, double fill);

  bool contains(std::string_view name) const;
  const Matrix& at(std::string_view name) const;
  Matrix& at(std::string_view name);
  std::size_t index_of(std::string_view name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Total scalar count across all matrices.
  std::size_t scalar_count() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  /// Same names and shapes, all zeros.
  ParameterSet zeros_like() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Entry> entries_;
};

bool operator==(const ParameterSet::Entry& a, const ParameterSet::Entry& b);

/// Parameters registered as gradient-tracked leaves on one tape.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, const ParameterSet& params);

  ad::Var operator[](std::string_view name) const;
  bool contains(std::string_view name) const { return params_->contains(name); }
  ad::Tape& tape() const { return *tape_; }

  /// Gradients from the tape's last backward(), aligned with the set.
  ParameterSet gradients() const;

 private:
  ad::Tape* tape_;
  const ParameterSet* params_;
  std::vector<ad::Var> vars_;
};

}  // namespace pathohr
