#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace timecast {

class RandomSource;

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense float32 tensor, row-major. Value type with shared storage: copies
// are shallow and cheap, which is what the tape's backward closures rely on.
// Data is written once by the producing op and treated as immutable
// afterwards; only optimizer steps mutate parameter storage, after the tape
// that saw it has been consumed.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_data(Shape shape, std::vector<float> data);
  static Tensor scalar(float value);
  static Tensor randn(Shape shape, RandomSource& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t numel() const;
  std::int64_t extent(int dim) const;

  std::span<float> data();
  std::span<const float> data() const;
  float* data_ptr();
  const float* data_ptr() const;

  bool requires_grad() const;
  // Allocates a zeroed gradient accumulator of identical shape.
  void enable_grad();
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();

  float item() const;  // numel()==1 only

  // element accessors (tests and small code paths)
  float& at(std::int64_t i);
  float at(std::int64_t i) const;
  float& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  float at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  Tensor clone() const;  // deep copy of data; no grad, no requires_grad

  // identity of the underlying storage (used by tests for aliasing checks)
  const void* storage_id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // sized iff requires_grad
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl();
  const Impl& impl() const;
};

// Throws Error(E_NONFINITE) naming `what` if any value is NaN/Inf.
void check_finite(const Tensor& t, const char* what);
void check_finite(std::span<const float> values, const char* what);

}  // namespace timecast
