#include "dermaug/tensor.hpp"

#include <functional>
#include <numeric>

#include "dermaug/error.hpp"

namespace dermaug {

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)),
      data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), fill) {}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor& ParamSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ShapeError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

Tensor& ParamSet::at(std::string_view name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw ShapeError("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ShapeError("no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

bool ParamSet::compatible(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.shape != other.entries_[i].second.shape)
      return false;
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [n, t] : entries_) out.add(n, Tensor(t.shape));
  return out;
}

void require_compatible(const ParamSet& a, const ParamSet& b, std::string_view context) {
  if (a.size() != b.size())
    throw ShapeError(std::string(context) + ": parameter sets hold " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " tensors");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& [na, ta] = a.entry(i);
    const auto& [nb, tb] = b.entry(i);
    if (na != nb || ta.shape != tb.shape)
      throw ShapeError(std::string(context) + ": '" + na + "' " + shape_string(ta.shape) + " vs '" + nb +
                       "' " + shape_string(tb.shape));
  }
}

}  // namespace dermaug
