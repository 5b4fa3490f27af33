#include "stcm/tensor.hpp"

#include <sstream>

namespace stcm {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank) {
    throw ShapeError("rank must be in 1.." + std::to_string(kMaxRank) + ", got " + std::to_string(shape.size()));
  }
  for (Index e : shape) {
    if (e < 1) throw ShapeError("non-positive extent in shape " + shape_to_string(shape));
  }
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("stack: no items");
  Shape out{static_cast<Index>(items.size())};
  const Shape& item = items.front().shape();
  out.insert(out.end(), item.begin(), item.end());
  Tensor result(out);
  const Index stride = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[i].shape(), item, "stack");
    result.vec().segment(static_cast<Index>(i) * stride, stride) = items[i].vec();
  }
  return result;
}

Tensor gather_rows(const Tensor& src, const std::vector<Index>& ids) {
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  Shape out = src.shape();
  out[0] = static_cast<Index>(ids.size());
  Tensor result(out);
  const Index stride = src.size() / src.extent(0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= src.extent(0)) throw ShapeError("gather_rows: id out of range");
    result.vec().segment(static_cast<Index>(i) * stride, stride) = src.vec().segment(ids[i] * stride, stride);
  }
  return result;
}

}  // namespace stcm
