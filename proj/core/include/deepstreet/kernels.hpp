#pragma once

// Raw forward/backward kernels over plain tensors. No graph recording here;
// see autodiff.hpp for the differentiable wrappers.

#include "deepstreet/tensor.hpp"

namespace deepstreet::kernels {

struct ConvGeometry {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

// floor((in + 2p - d(k-1) - 1) / s) + 1; throws when the dilated kernel
// does not fit in the padded input.
int conv_output_extent(int input, int kernel, const ConvGeometry& geometry);

// s(in - 1) + d(k-1) + 1 - 2p; throws when non-positive.
int conv_transpose_output_extent(int input, int kernel, const ConvGeometry& geometry);

// input [N,Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout] or null.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, const ConvGeometry& geometry);

// Accumulates (+=) into whichever gradient buffers are non-null. Buffers must
// already carry the shape of the tensor they differentiate.
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                     const ConvGeometry& geometry, Tensor* grad_input, Tensor* grad_kernel, Tensor* grad_bias);

// Adjoint of conv2d with the same kernel tensor: input [N,Cout,H,W] (the conv's
// output channels), kernel [Cout,Cin,kH,kW], result [N,Cin,H',W'].
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        const ConvGeometry& geometry);

void conv2d_transpose_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                               const ConvGeometry& geometry, Tensor* grad_input, Tensor* grad_kernel,
                               Tensor* grad_bias);

// input [N,D] x weights [D,K] + bias [K].
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor* bias);

void fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output,
                              Tensor* grad_input, Tensor* grad_weights, Tensor* grad_bias);

}  // namespace deepstreet::kernels
