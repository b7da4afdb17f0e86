#include <cmath>

#include "pie/image.hpp"

namespace pie {

float bilinear_sample(const ImageTensor& img, double x, double y, int ch) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;

  auto texel = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return 0.0;
    return img.at(yy, xx, ch);
  };

  const double top = texel(y0, x0) * (1.0 - fx) + texel(y0, x0 + 1) * fx;
  const double bot = texel(y0 + 1, x0) * (1.0 - fx) + texel(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  ImageTensor out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      for (int ch = 0; ch < 3; ++ch)
        out.at(y, x, ch) = bilinear_sample(img, src_x, src_y, ch);
    }
  }
  return out;
}

}  // namespace pie
