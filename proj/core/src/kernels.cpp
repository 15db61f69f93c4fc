#include "deepstreet/kernels.hpp"

#include <Eigen/Core>
#include <string>

#include "deepstreet/error.hpp"

namespace deepstreet::kernels {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXf>;

struct PlaneGeometry {
  int channels;
  int height;
  int width;
  int kernel_h;
  int kernel_w;
  int out_h;
  int out_w;
  ConvGeometry conv;
};

// Unfolds one [C,H,W] image into columns [C*kH*kW, outH*outW].
void im2col(const float* image, const PlaneGeometry& g, float* columns) {
  const int out_area = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        float* row = columns + (static_cast<std::size_t>(c * g.kernel_h + ki) * g.kernel_w + kj) * out_area;
        const int row_offset = ki * g.conv.dilation - g.conv.padding;
        const int col_offset = kj * g.conv.dilation - g.conv.padding;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.conv.stride + row_offset;
          float* dst = row + static_cast<std::size_t>(oh) * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.conv.stride + col_offset;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : 0.0f;
          }
        }
      }
    }
  }
}

// Folds columns back into an image, accumulating overlapping taps.
void col2im(const float* columns, const PlaneGeometry& g, float* image) {
  const int out_area = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    float* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const float* row =
            columns + (static_cast<std::size_t>(c * g.kernel_h + ki) * g.kernel_w + kj) * out_area;
        const int row_offset = ki * g.conv.dilation - g.conv.padding;
        const int col_offset = kj * g.conv.dilation - g.conv.padding;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.conv.stride + row_offset;
          if (ih < 0 || ih >= g.height) continue;
          const float* src = row + static_cast<std::size_t>(oh) * g.out_w;
          float* dst = plane + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.conv.stride + col_offset;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void validate_geometry(const ConvGeometry& g) {
  if (g.stride < 1 || g.dilation < 1 || g.padding < 0) {
    throw DimensionError("convolution needs stride >= 1, dilation >= 1, padding >= 0");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

void check_bias(const Tensor* bias, int channels, const char* what) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw DimensionError(std::string(what) + ": bias shape " + shape_to_string(bias->shape()) +
                         " does not match " + std::to_string(channels) + " channels");
  }
}

// Geometry of the forward convolution relating a [Cin,H,W] image to a
// [Cout,outH,outW] response. Shared by conv2d and its transpose.
PlaneGeometry conv_plane(int cin, int h, int w, const Tensor& kernel, int out_h, int out_w,
                         const ConvGeometry& geometry) {
  return PlaneGeometry{cin, h, w, kernel.dim(2), kernel.dim(3), out_h, out_w, geometry};
}

void add_bias(Tensor& output, const Tensor& bias) {
  const int n = output.dim(0), c = output.dim(1);
  const std::size_t area = static_cast<std::size_t>(output.dim(2)) * output.dim(3);
  float* out = output.raw();
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      float* plane = out + (static_cast<std::size_t>(i) * c + ch) * area;
      const float b = bias[ch];
      for (std::size_t p = 0; p < area; ++p) plane[p] += b;
    }
  }
}

void accumulate_bias_grad(const Tensor& grad_output, Tensor& grad_bias) {
  const int n = grad_output.dim(0), c = grad_output.dim(1);
  const std::size_t area = static_cast<std::size_t>(grad_output.dim(2)) * grad_output.dim(3);
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float* plane = grad_output.raw() + (static_cast<std::size_t>(i) * c + ch) * area;
      double sum = 0.0;
      for (std::size_t p = 0; p < area; ++p) sum += plane[p];
      grad_bias[ch] += static_cast<float>(sum);
    }
  }
}

}  // namespace

int conv_output_extent(int input, int kernel, const ConvGeometry& geometry) {
  validate_geometry(geometry);
  const int span = geometry.dilation * (kernel - 1) + 1;
  const int padded = input + 2 * geometry.padding;
  if (padded < span) {
    throw DimensionError("dilated kernel extent " + std::to_string(span) + " exceeds padded input " +
                         std::to_string(padded));
  }
  return (padded - span) / geometry.stride + 1;
}

int conv_transpose_output_extent(int input, int kernel, const ConvGeometry& geometry) {
  validate_geometry(geometry);
  const int extent = geometry.stride * (input - 1) + geometry.dilation * (kernel - 1) + 1 - 2 * geometry.padding;
  if (extent <= 0) {
    throw DimensionError("transposed convolution yields non-positive extent " + std::to_string(extent));
  }
  return extent;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, const ConvGeometry& geometry) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (input.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) + " channels but kernel expects " +
                         std::to_string(kernel.dim(1)));
  }
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernel.dim(0);
  check_bias(bias, cout, "conv2d");
  const int out_h = conv_output_extent(h, kernel.dim(2), geometry);
  const int out_w = conv_output_extent(w, kernel.dim(3), geometry);
  const PlaneGeometry g = conv_plane(cin, h, w, kernel, out_h, out_w, geometry);

  const int patch = cin * g.kernel_h * g.kernel_w;
  const int out_area = out_h * out_w;
  Tensor output({n, cout, out_h, out_w});
  std::vector<float> columns(static_cast<std::size_t>(patch) * out_area);
  ConstMatrixMap weights(kernel.raw(), cout, patch);
  for (int i = 0; i < n; ++i) {
    im2col(input.raw() + static_cast<std::size_t>(i) * cin * h * w, g, columns.data());
    MatrixMap out(output.raw() + static_cast<std::size_t>(i) * cout * out_area, cout, out_area);
    out.noalias() = weights * ConstMatrixMap(columns.data(), patch, out_area);
  }
  if (bias) add_bias(output, *bias);
  return output;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                     const ConvGeometry& geometry, Tensor* grad_input, Tensor* grad_kernel, Tensor* grad_bias) {
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernel.dim(0);
  const int out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  const PlaneGeometry g = conv_plane(cin, h, w, kernel, out_h, out_w, geometry);
  const int patch = cin * g.kernel_h * g.kernel_w;
  const int out_area = out_h * out_w;

  std::vector<float> columns(static_cast<std::size_t>(patch) * out_area);
  ConstMatrixMap weights(kernel.raw(), cout, patch);
  for (int i = 0; i < n; ++i) {
    ConstMatrixMap dout(grad_output.raw() + static_cast<std::size_t>(i) * cout * out_area, cout, out_area);
    if (grad_kernel) {
      im2col(input.raw() + static_cast<std::size_t>(i) * cin * h * w, g, columns.data());
      MatrixMap dk(grad_kernel->raw(), cout, patch);
      dk.noalias() += dout * ConstMatrixMap(columns.data(), patch, out_area).transpose();
    }
    if (grad_input) {
      MatrixMap dcols(columns.data(), patch, out_area);
      dcols.noalias() = weights.transpose() * dout;
      col2im(columns.data(), g, grad_input->raw() + static_cast<std::size_t>(i) * cin * h * w);
    }
  }
  if (grad_bias) accumulate_bias_grad(grad_output, *grad_bias);
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        const ConvGeometry& geometry) {
  require_rank(input, 4, "conv2d_transpose input");
  require_rank(kernel, 4, "conv2d_transpose kernel");
  if (input.dim(1) != kernel.dim(0)) {
    throw DimensionError("conv2d_transpose: input has " + std::to_string(input.dim(1)) +
                         " channels but kernel expects " + std::to_string(kernel.dim(0)));
  }
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernel.dim(1);
  check_bias(bias, cout, "conv2d_transpose");
  const int out_h = conv_transpose_output_extent(h, kernel.dim(2), geometry);
  const int out_w = conv_transpose_output_extent(w, kernel.dim(3), geometry);
  // The forward conv maps [cout,out_h,out_w] -> [cin,h,w]; we scatter through it.
  const PlaneGeometry g = conv_plane(cout, out_h, out_w, kernel, h, w, geometry);
  const int patch = cout * g.kernel_h * g.kernel_w;
  const int area = h * w;

  Tensor output({n, cout, out_h, out_w});
  std::vector<float> columns(static_cast<std::size_t>(patch) * area);
  ConstMatrixMap weights(kernel.raw(), cin, patch);
  for (int i = 0; i < n; ++i) {
    ConstMatrixMap x(input.raw() + static_cast<std::size_t>(i) * cin * area, cin, area);
    MatrixMap cols(columns.data(), patch, area);
    cols.noalias() = weights.transpose() * x;
    col2im(columns.data(), g, output.raw() + static_cast<std::size_t>(i) * cout * out_h * out_w);
  }
  if (bias) add_bias(output, *bias);
  return output;
}

void conv2d_transpose_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                               const ConvGeometry& geometry, Tensor* grad_input, Tensor* grad_kernel,
                               Tensor* grad_bias) {
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernel.dim(1);
  const int out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  const PlaneGeometry g = conv_plane(cout, out_h, out_w, kernel, h, w, geometry);
  const int patch = cout * g.kernel_h * g.kernel_w;
  const int area = h * w;

  std::vector<float> columns(static_cast<std::size_t>(patch) * area);
  ConstMatrixMap weights(kernel.raw(), cin, patch);
  for (int i = 0; i < n; ++i) {
    im2col(grad_output.raw() + static_cast<std::size_t>(i) * cout * out_h * out_w, g, columns.data());
    ConstMatrixMap cols(columns.data(), patch, area);
    if (grad_input) {
      MatrixMap dx(grad_input->raw() + static_cast<std::size_t>(i) * cin * area, cin, area);
      dx.noalias() += weights * cols;
    }
    if (grad_kernel) {
      ConstMatrixMap x(input.raw() + static_cast<std::size_t>(i) * cin * area, cin, area);
      MatrixMap dk(grad_kernel->raw(), cin, patch);
      dk.noalias() += x * cols.transpose();
    }
  }
  if (grad_bias) accumulate_bias_grad(grad_output, *grad_bias);
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor* bias) {
  require_rank(input, 2, "fully_connected input");
  require_rank(weights, 2, "fully_connected weights");
  if (input.dim(1) != weights.dim(0)) {
    throw DimensionError("fully_connected: input width " + std::to_string(input.dim(1)) +
                         " does not match weight rows " + std::to_string(weights.dim(0)));
  }
  const int n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  check_bias(bias, k, "fully_connected");
  Tensor output({n, k});
  MatrixMap out(output.raw(), n, k);
  out.noalias() = ConstMatrixMap(input.raw(), n, d) * ConstMatrixMap(weights.raw(), d, k);
  if (bias) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) out(i, j) += (*bias)[j];
    }
  }
  return output;
}

void fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output,
                              Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias) {
  const int n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  ConstMatrixMap dout(grad_output.raw(), n, k);
  if (grad_input) {
    MatrixMap(grad_input->raw(), n, d).noalias() += dout * ConstMatrixMap(weights.raw(), d, k).transpose();
  }
  if (grad_weights) {
    MatrixMap(grad_weights->raw(), d, k).noalias() += ConstMatrixMap(input.raw(), n, d).transpose() * dout;
  }
  if (grad_bias) {
    for (int j = 0; j < k; ++j) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += dout(i, j);
      (*grad_bias)[j] += static_cast<float>(sum);
    }
  }
}

}  // namespace deepstreet::kernels
