#include "mt6/params.hpp"

#include <cmath>

#include "mt6/error.hpp"

namespace mt6 {

size_t ParameterSet::Add(std::string name, std::vector<size_t> shape, double fill) {
  if (index_.count(name)) Fail(ErrorKind::kInvalidArgument, "duplicate parameter '" + name + "'");
  size_t n = 1;
  for (size_t d : shape) n *= d;
  const size_t idx = tensors_.size();
  index_.emplace(name, idx);
  tensors_.push_back(Tensor{std::move(name), std::move(shape), std::vector<double>(n, fill)});
  return idx;
}

size_t ParameterSet::IndexOf(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) Fail(ErrorKind::kFormat, "missing parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::operator[](const std::string& name) { return tensors_[IndexOf(name)]; }
const Tensor& ParameterSet::operator[](const std::string& name) const {
  return tensors_[IndexOf(name)];
}

ParameterSet ParameterSet::ZerosLike() const {
  ParameterSet z;
  for (const auto& t : tensors_) z.Add(t.name, t.shape, 0.0);
  return z;
}

void ParameterSet::SetZero() {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), 0.0);
}

size_t ParameterSet::TotalElements() const {
  size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

bool ParameterSet::AllFinite() const {
  for (const auto& t : tensors_) {
    for (double x : t.data) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

bool ParameterSet::SameLayout(const ParameterSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name != other.tensors_[i].name ||
        tensors_[i].shape != other.tensors_[i].shape) {
      return false;
    }
  }
  return true;
}

void ParameterSet::Accumulate(const ParameterSet& other) {
  if (!SameLayout(other)) Fail(ErrorKind::kInvalidArgument, "parameter layouts differ");
  for (size_t i = 0; i < tensors_.size(); ++i) {
    auto& dst = tensors_[i].data;
    const auto& src = other.tensors_[i].data;
    for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

double ParameterSet::SquaredNorm() const {
  double s = 0.0;
  for (const auto& t : tensors_) {
    for (double x : t.data) s += x * x;
  }
  return s;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (!SameLayout(other)) return false;
  for (size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].data != other.tensors_[i].data) return false;
  }
  return true;
}

}  // namespace mt6
