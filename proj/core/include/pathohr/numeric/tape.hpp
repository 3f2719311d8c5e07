#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pathohr/numeric/matrix.hpp"

namespace pathohr::ad {

class Tape;

/// Handle to a value slot on a Tape. Cheap to copy; only valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of matrix-valued primitive operations.
///
/// Every operation appends a node holding its output value and, when any
/// input tracks gradients, a closure that pushes the output gradient back
/// to its inputs. backward() replays closures in reverse insertion order,
/// which is a valid topological order because nodes only reference earlier
/// nodes. A Tape is single-threaded; use one per concurrent pass.
class Tape {
 public:
  /// Receives the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Gradient-tracked input (a parameter or a value under test).
  Var leaf(Matrix value);

  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient of the last backward() output w.r.t. v. Zero matrix when v did
  /// not influence the output (in particular for constants).
  Matrix grad(Var v) const;

  /// Output gradient of node `id`, valid inside a BackwardFn.
  const Matrix& upstream(std::size_t id) const { return *nodes_[id].grad; }
  /// Accumulation slot for the gradient of `v`; allocated zeroed on first use.
  /// Returns nullptr when v does not track gradients.
  Matrix* grad_slot(Var v);

  /// Seeds d(output)/d(output) = 1 elementwise and back-propagates.
  void backward(Var output);

  void add_macs(std::uint64_t n) { macs_ += n; }
  std::uint64_t macs() const { return macs_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    std::optional<Matrix> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::uint64_t macs_ = 0;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

}  // namespace pathohr::ad
