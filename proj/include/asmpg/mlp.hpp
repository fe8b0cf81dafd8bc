#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "asmpg/rng.hpp"

namespace asmpg {

/// Fully connected tanh network with a linear output layer. Parameters live in
/// an external flat buffer: for each layer, W (out x in, row-major) then b.
class Mlp {
 public:
  /// Activations recorded by forward(): values[0] is the input, values.back() the logits.
  struct Tape {
    std::vector<std::vector<double>> values;
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  std::size_t num_params() const { return num_params_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }

  void forward(std::span<const double> params, std::span<const double> input, Tape& tape) const;

  /// grad += scale * d(dlogits . logits)/d(params), using the tape of a prior forward().
  void backward(std::span<const double> params, const Tape& tape, std::span<const double> dlogits,
                double scale, std::span<double> grad) const;

  /// Row-major activations for a batch of inputs, one row per sample.
  struct BatchTape {
    std::vector<std::vector<double>> values;
    int rows = 0;
  };

  /// inputs is rows x input_dim, row-major.
  void forward_batch(std::span<const double> params, std::span<const double> inputs, int rows, BatchTape& tape) const;

  /// grad += sum over rows of d(dlogits_row . logits_row)/d(params); dlogits is rows x output_dim.
  void backward_batch(std::span<const double> params, const BatchTape& tape, std::span<const double> dlogits,
                      std::span<double> grad) const;

  /// Glorot-uniform weights, zero biases.
  void init_glorot(std::span<double> params, Rng& rng) const;

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's W
  std::size_t num_params_ = 0;
};

}  // namespace asmpg
