#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dermaug {

/// Dense row-major array of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const noexcept { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  std::span<double> span() noexcept { return data; }
  std::span<const double> span() const noexcept { return data; }
  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Named tensors in insertion order. Two sets are compatible when they hold
/// the same names, in the same order, with the same shapes.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Throws ShapeError on a duplicate name.
  Tensor& add(std::string name, Tensor tensor);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  bool compatible(const ParamSet& other) const;
  ParamSet zeros_like() const;
  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Throws ShapeError naming the first mismatching tensor.
void require_compatible(const ParamSet& a, const ParamSet& b, std::string_view context);

}  // namespace dermaug
