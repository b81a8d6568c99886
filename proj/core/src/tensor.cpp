#include "timecast/tensor.hpp"

#include <cmath>
#include <sstream>

#include "timecast/errors.hpp"
#include "timecast/random.hpp"

namespace timecast {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw Error(errtag::kShape, "operation on undefined tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error(errtag::kShape, "operation on undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<Impl>();
  const std::int64_t n = shape_numel(shape);
  if (n < 0) throw Error(errtag::kShape, "negative extent in " + shape_str(shape));
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<std::size_t>(n), 0.f);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t = zeros(std::move(shape));
  for (float& v : t.data()) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
  const std::int64_t n = shape_numel(shape);
  if (static_cast<std::int64_t>(data.size()) != n) {
    throw Error(errtag::kShape,
                "data length " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value) { return from_data({}, {value}); }

Tensor Tensor::randn(Shape shape, RandomSource& rng) {
  Tensor t = zeros(std::move(shape));
  rng.fill_normal(t.data());
  return t;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl().data.size());
}

std::int64_t Tensor::extent(int dim) const {
  const Shape& s = shape();
  if (dim < 0 || dim >= static_cast<int>(s.size())) {
    throw Error(errtag::kShape, "extent(" + std::to_string(dim) +
                                    ") out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(dim)];
}

std::span<float> Tensor::data() { return impl().data; }
std::span<const float> Tensor::data() const { return impl().data; }
float* Tensor::data_ptr() { return impl().data.data(); }
const float* Tensor::data_ptr() const { return impl().data.data(); }

bool Tensor::requires_grad() const {
  return impl_ != nullptr && impl_->requires_grad;
}

void Tensor::enable_grad() {
  Impl& im = impl();
  if (im.requires_grad) return;
  im.requires_grad = true;
  im.grad.assign(im.data.size(), 0.f);
}

std::span<float> Tensor::grad() {
  Impl& im = impl();
  if (!im.requires_grad) {
    throw Error(errtag::kTape, "grad() on tensor without requires_grad");
  }
  return im.grad;
}

std::span<const float> Tensor::grad() const {
  const Impl& im = impl();
  if (!im.requires_grad) {
    throw Error(errtag::kTape, "grad() on tensor without requires_grad");
  }
  return im.grad;
}

void Tensor::zero_grad() {
  Impl& im = impl();
  if (im.requires_grad) im.grad.assign(im.data.size(), 0.f);
}

float Tensor::item() const {
  if (numel() != 1) {
    throw Error(errtag::kShape, "item() on non-scalar tensor " + shape_str(shape()));
  }
  return impl().data[0];
}

float& Tensor::at(std::int64_t i) { return impl().data.at(static_cast<std::size_t>(i)); }
float Tensor::at(std::int64_t i) const { return impl().data.at(static_cast<std::size_t>(i)); }

float& Tensor::at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  const Shape& s = shape();
  return impl().data[static_cast<std::size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
}

float Tensor::at4(std::int64_t n, std::int64_t c, std::int64_t h,
                  std::int64_t w) const {
  const Shape& s = shape();
  return impl().data[static_cast<std::size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = shape();
  impl->data = this->impl().data;
  return Tensor(std::move(impl));
}

void check_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw Error(errtag::kNonFinite,
                  std::string("non-finite value produced by ") + what);
    }
  }
}

void check_finite(const Tensor& t, const char* what) {
  check_finite(t.data(), what);
}

}  // namespace timecast
