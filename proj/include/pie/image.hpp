#ifndef PIE_IMAGE_HPP_
#define PIE_IMAGE_HPP_

#include "pie/types.hpp"

namespace pie {

/// Bilinear sample of one channel at a real-valued location. Samples that
/// fall outside the image contribute the background value 0.
float bilinear_sample(const ImageTensor& img, double x, double y, int ch);

/// Bilinear resize to out_h x out_w.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

}  // namespace pie

#endif  // PIE_IMAGE_HPP_
