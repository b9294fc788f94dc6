#ifndef DCNN_LAYERS_HPP
#define DCNN_LAYERS_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/tensor.hpp"

// Forward and backward rules for every layer type: cross-correlation /
// true convolution, pooling, batch normalization, dropout, dense,
// the activation family and softmax cross-entropy. All functions are
// pure given their inputs; batch-norm mutates only the state that is
// passed in by reference.

namespace dcnn {

enum class Mode { training, inference };

// ---------------------------------------------------------------------
// Convolution

template <typename T>
struct ConvParams {
    Tensor<T> kernels;    // (c_out, c_in, kh, kw)
    std::vector<T> bias;  // length c_out
    int stride = 1;
    int padding = 0;
};

// Output rows/cols for one spatial axis; throws if no window fits.
std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int padding);

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> kernels;
    std::vector<T> bias;
};

// Sliding dot product without kernel flipping; what "conv" layers in
// mainstream frameworks actually compute. Out-of-range input reads are
// zero (zero padding).
template <typename T>
Tensor<T> cross_correlate2d(const Tensor<T>& input, const ConvParams<T>& p);

// True convolution: cross-correlation with every kernel rotated 180 degrees.
template <typename T>
Tensor<T> convolve2d(const Tensor<T>& input, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> cross_correlate2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                                        const Tensor<T>& upstream);

// Normalized match between a kernel and one receptive-field window of the
// same size: sum of elementwise products divided by the pixel count. A
// perfect +-1 pattern match scores 1, its negation -1.
template <typename T>
T feature_match_score(const Tensor<T>& window, const Tensor<T>& kernel);

// ---------------------------------------------------------------------
// Pooling

enum class PoolMode { max, avg };

template <typename T>
struct PoolResult {
    Tensor<T> output;
    // For max mode: flat index into the input tensor of each selected
    // element, one per output element. Empty for avg.
    std::vector<std::uint32_t> argmax;
};

template <typename T>
PoolResult<T> pool2d(const Tensor<T>& input, PoolMode mode, int window, int stride);

template <typename T>
Tensor<T> pool2d_backward(const Shape4& input_shape, const PoolResult<T>& fwd, PoolMode mode,
                          int window, int stride, const Tensor<T>& upstream);

// ---------------------------------------------------------------------
// Batch normalization

template <typename T>
struct BatchNormState {
    std::vector<T> gamma;        // trainable scale, length c
    std::vector<T> beta;         // trainable shift, length c
    std::vector<T> moving_mean;  // non-trainable, length c
    std::vector<T> moving_var;   // non-trainable, length c
    T momentum = T(0.99);
    T epsilon = T(1e-3);
};

template <typename T>
BatchNormState<T> make_batch_norm(std::size_t channels, T momentum = T(0.99),
                                  T epsilon = T(1e-3));

// Per-batch values cached by the training forward pass for backward.
template <typename T>
struct BatchNormCache {
    std::vector<T> mean;     // batch mean per channel
    std::vector<T> var;      // biased batch variance per channel
    Tensor<T> normalized;    // x_hat
};

// Training mode normalizes with batch statistics over (n,h,w) per channel
// and folds them into the moving averages; inference mode uses the moving
// statistics only.
template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& input, BatchNormState<T>& state, Mode mode,
                             BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
    Tensor<T> input;
    std::vector<T> gamma;
    std::vector<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& input, const BatchNormState<T>& state,
                                      Mode mode, const BatchNormCache<T>& cache,
                                      const Tensor<T>& upstream);

// ---------------------------------------------------------------------
// Dropout

template <typename T>
struct DropoutResult {
    Tensor<T> output;
    std::vector<std::uint8_t> mask;  // 1 = kept; empty in inference mode
};

// Inverted dropout: each element is zeroed with probability rate and the
// survivors are scaled by 1/(1-rate), so inference is the identity map.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Mode mode, SeededRng& rng);

template <typename T>
Tensor<T> dropout_backward(const std::vector<std::uint8_t>& mask, double rate,
                           const Tensor<T>& upstream);

// ---------------------------------------------------------------------
// Dense

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights,
                        const std::vector<T>& bias);

template <typename T>
struct DenseGrads {
    Tensor<T> input;
    Tensor<T> weights;
    std::vector<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& upstream);

// ---------------------------------------------------------------------
// Activations
//
// Elementwise definitions (see docs/activations.md for the formulas and
// derivatives):
//   relu(x)  = max(0, x)
//   gelu(x)  = x * Phi(x), Phi the standard normal CDF (exact erf form)
//   selu(x)  = lambda * (x > 0 ? x : alpha*(exp(x)-1))
//   mish(x)  = x * tanh(softplus(x))
//   swish(x) = x * sigmoid(x)
//   lisht(x) = x * tanh(x)
// softplus uses its asymptote for |x| > 20 so mish never overflows.

enum class Activation { relu, gelu, selu, mish, swish, lisht };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

template <typename T>
T activation_scalar(Activation kind, T x);

template <typename T>
T activation_derivative(Activation kind, T x);

template <typename T>
Tensor<T> apply_activation(Activation kind, const Tensor<T>& x);

// upstream * f'(x) where x is the layer's pre-activation input.
template <typename T>
Tensor<T> activation_backward(Activation kind, const Tensor<T>& x, const Tensor<T>& upstream);

// ---------------------------------------------------------------------
// Softmax cross-entropy (fused; the network head emits raw logits)

template <typename T>
struct SoftmaxXentResult {
    double loss = 0;        // mean over the batch of -ln p(true class)
    Tensor<T> probs;        // rows sum to 1
};

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                           const std::vector<int>& labels);

// d(mean loss)/d(logits) = (probs - onehot) / batch.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const SoftmaxXentResult<T>& fwd,
                                         const std::vector<int>& labels);

} // namespace dcnn

#include "dcnn/layers_impl.hpp"

#endif
