#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace mt6 {

struct Tensor {
  std::string name;
  std::vector<size_t> shape;
  std::vector<double> data;

  size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 1 : shape[0]) : shape[1]; }
};

// Ordered collection of named arrays. Order is part of the identity: it fixes
// checkpoint layout and every reduction over parameters.
class ParameterSet {
 public:
  size_t Add(std::string name, std::vector<size_t> shape, double fill = 0.0);

  size_t size() const { return tensors_.size(); }
  Tensor& at(size_t i) { return tensors_[i]; }
  const Tensor& at(size_t i) const { return tensors_[i]; }
  Tensor& operator[](const std::string& name);
  const Tensor& operator[](const std::string& name) const;
  bool Contains(const std::string& name) const { return index_.count(name) > 0; }
  size_t IndexOf(const std::string& name) const;

  std::vector<Tensor>::iterator begin() { return tensors_.begin(); }
  std::vector<Tensor>::iterator end() { return tensors_.end(); }
  std::vector<Tensor>::const_iterator begin() const { return tensors_.begin(); }
  std::vector<Tensor>::const_iterator end() const { return tensors_.end(); }

  ParameterSet ZerosLike() const;
  void SetZero();
  size_t TotalElements() const;
  bool AllFinite() const;
  bool SameLayout(const ParameterSet& other) const;
  // this += other, elementwise in storage order.
  void Accumulate(const ParameterSet& other);
  double SquaredNorm() const;

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace mt6
