#ifndef DCNN_NETWORK_HPP
#define DCNN_NETWORK_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcnn/layers.hpp"
#include "dcnn/optim.hpp"
#include "dcnn/tensor.hpp"

// Sequential model assembly: layer specs, validation, parameter init,
// forward/backward over batches, parameter counting and checkpoints.

namespace dcnn {

enum class LayerKind { rescale, conv, batchnorm, activation, maxpool, dropout, flatten, dense };

std::string layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int channels = 0;                         // conv filters / dense units
    int kernel = 3;                           // conv
    int stride = 1;                           // conv
    int padding = 1;                          // conv
    int window = 2;                           // maxpool window (stride = window)
    double rate = 0.3;                        // dropout
    double scale = 1.0 / 255.0;               // rescale
    Activation activation = Activation::mish; // activation

    static LayerSpec rescale(double scale = 1.0 / 255.0);
    static LayerSpec conv(int channels, int kernel = 3, int stride = 1, int padding = 1);
    static LayerSpec batchnorm();
    static LayerSpec act(Activation a);
    static LayerSpec maxpool(int window = 2);
    static LayerSpec dropout(double rate);
    static LayerSpec flatten();
    static LayerSpec dense(int units);
};

struct NetworkSpec {
    std::size_t in_channels = 3;
    std::size_t in_size = 128;  // square input, height = width
    std::vector<LayerSpec> layers;

    // The 19-layer stack this codebase trains by default: rescale(1/255),
    // six [conv 3x3 -> batchnorm -> activation -> maxpool 2] blocks with
    // widths 8,16,32,48,64,96, then flatten, dense(112), batchnorm,
    // activation, dropout, dense(3).
    static NetworkSpec reference(std::size_t in_size = 128,
                                 Activation activation = Activation::mish,
                                 double dropout_rate = 0.3);

    // Structural rules: rescale only at index 0; a batchnorm directly
    // after every conv and after the first dense (when it is hidden);
    // when any dense exists, the net ends in a 3-unit dense head; all
    // consecutive shapes compatible. Throws ConfigError naming the first
    // offending layer index.
    void validate() const;

    // Output shape of every layer for a given batch size, index-aligned
    // with `layers`. Also the shape-compatibility checker.
    std::vector<Shape4> output_shapes(std::size_t batch = 1) const;

    // Index of the last conv layer, or npos when there is none.
    std::size_t last_conv_index() const;
};

// Per-layer parameter storage; only the members matching spec.kind are
// populated.
template <typename T>
struct Layer {
    LayerSpec spec;
    ConvParams<T> conv;       // kind == conv
    BatchNormState<T> bn;     // kind == batchnorm
    Tensor<T> weights;        // kind == dense, (units, features, 1, 1)
    std::vector<T> bias;      // kind == dense
};

template <typename T>
struct Network {
    NetworkSpec spec;
    std::vector<Layer<T>> layers;
    Mode mode = Mode::inference;
    std::uint64_t init_seed = 0;
};

using NetworkF = Network<float>;

// Builds and He-uniform-initializes a network. Conv kernels and dense
// weights draw from U(-limit, limit) with limit = sqrt(6 / fan_in) in
// layer order; biases and batch-norm beta/moving_mean start at zero,
// gamma/moving_var at one. Same seed, same spec: bitwise-equal state.
template <typename T>
Network<T> build_network(const NetworkSpec& spec, SeededRng& rng);

struct ParamCount {
    std::size_t total = 0;
    std::size_t trainable = 0;
    std::size_t non_trainable = 0;  // batch-norm moving mean/var
};

ParamCount param_count(const NetworkSpec& spec);

template <typename T>
ParamCount param_count(const Network<T>& net) {
    return param_count(net.spec);
}

template <typename T>
struct ForwardResult {
    Tensor<T> logits;
    std::map<std::size_t, Tensor<T>> captured;  // layer index -> its output
};

// Runs the net over a batch. Training mode applies batch statistics and
// dropout and therefore needs `rng`; inference mode is a pure function
// of (net, batch). `capture` lists layer indices whose outputs to copy.
template <typename T>
ForwardResult<T> forward(Network<T>& net, const Tensor<T>& batch,
                         const std::vector<std::size_t>& capture = {},
                         SeededRng* rng = nullptr);

// Gradient slots, index-aligned with Network::layers; only the members
// for the layer's kind are populated.
template <typename T>
struct LayerGrads {
    Tensor<T> weights;      // conv kernels or dense weights
    std::vector<T> bias;    // conv or dense bias
    std::vector<T> gamma;   // batchnorm
    std::vector<T> beta;    // batchnorm
};

template <typename T>
struct BackwardResult {
    double loss = 0;
    Tensor<T> probs;                 // softmax over the batch, for metrics
    std::vector<LayerGrads<T>> grads;
};

// Forward + loss + full backward sweep; requires training mode (throws
// ConfigError otherwise). Updates batch-norm moving statistics as a side
// effect of the training-mode forward pass.
template <typename T>
BackwardResult<T> backward(Network<T>& net, const Tensor<T>& batch,
                           const std::vector<int>& labels, SeededRng& rng);

// Flat views over every trainable parameter paired with its gradient,
// in layer order (conv: kernels then bias; batchnorm: gamma then beta;
// dense: weights then bias). This order is the optimizer slot layout and
// the checkpoint tensor directory order.
template <typename T>
std::vector<ParamView<T>> param_views(Network<T>& net, BackwardResult<T>& grads);

// Same order and names, without gradients (for serialization).
template <typename T>
std::vector<ParamView<T>> param_views(Network<T>& net);

// ---------------------------------------------------------------------
// Checkpoints
//
// Layout, all integers little-endian:
//   bytes 0..3   magic "DCNN"
//   bytes 4..5   format version, u16 (currently 1)
//   bytes 6..13  manifest length in bytes, u64
//   manifest     UTF-8 JSON: network spec, epoch, seed, optimizer kind +
//                hyperparameters + step count, and a tensor directory of
//                {name, offset} with offsets relative to the blob base
//   blobs        tensors in the tensor-core wire format, back to back
// See docs/checkpoint-format.md.

struct OptimizerSnapshot {
    std::string kind = "adabelief";  // or "sgd"
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-14;
    double weight_decay = 0;
    std::int64_t step = 0;
    std::vector<std::vector<float>> m;  // first moments, param-view order
    std::vector<std::vector<float>> s;  // second moments, param-view order

    static OptimizerSnapshot of(const AdaBelief<float>& opt);
    AdaBelief<float> restore() const;
};

struct Checkpoint {
    NetworkF net;
    OptimizerSnapshot optim;
    int epoch = 0;
    std::uint64_t seed = 0;
};

void save_checkpoint(const NetworkF& net, const OptimizerSnapshot& optim, int epoch,
                     std::uint64_t seed, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

} // namespace dcnn

#include "dcnn/network_impl.hpp"

#endif
