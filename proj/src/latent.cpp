#include "scm/latent.hpp"

#include "scm/error.hpp"

namespace scm {

LatentTensor::LatentTensor(Tensor data) : data_(std::move(data)) {
  if (data_.rank() != 5) throw ShapeError("latent must be [F,V,H,W,C], got " + shape_string(data_.shape()));
}

LatentTensor::LatentTensor(const LatentDims& dims, double fill) : data_(dims.shape(), fill) {}

LatentDims LatentTensor::dims() const {
  const auto& s = data_.shape();
  return {s[0], s[1], s[2], s[3], s[4]};
}

void PriorSet::validate(const LatentDims& d) const {
  auto expect = [](const Tensor& t, const Shape& shape, const char* name) {
    if (t.shape() != shape) {
      throw ShapeError(std::string(name) + " prior is " + shape_string(t.shape()) + ", expected " +
                       shape_string(shape));
    }
  };
  expect(spatial, {d.frames, d.views, 1, d.channels}, "spatial");
  expect(camera, {d.frames, d.height, d.width, d.channels}, "camera");
  expect(motion, {d.views, d.height, d.width, d.channels}, "motion");
  if (!view_embedding.empty()) expect(view_embedding, {d.views, d.channels}, "view embedding");
}

}  // namespace scm
