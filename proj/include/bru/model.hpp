#pragma once

// Declarative architectures and their per-layer activation schedules.

#include <optional>
#include <string>
#include <vector>

#include "bru/activation.hpp"
#include "bru/layers.hpp"
#include "bru/tensor.hpp"

namespace bru {

enum class LayerKind { Dense, Conv2D, AvgPool, MaxPool, Dropout, Flatten };
enum class Family { ReLU, ELU, BRU };
enum class Architecture { MLP, SAE, LeNetS, ConvPool };

std::string to_string(LayerKind kind);
std::string to_string(Family family);
std::string to_string(Architecture arch);
Family parse_family(const std::string& text);
Architecture parse_architecture(const std::string& text);

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t units = 0;  ///< dense units or convolution feature maps
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t stride = 1;
  Padding padding = Padding::Same;
  std::optional<ActivationKind> activation;  ///< absent for dropout/flatten
  double keep_prob = 1.0;                    ///< dropout only

  static LayerSpec dense(std::size_t units, ActivationKind act);
  static LayerSpec conv(std::size_t maps, std::size_t k, std::size_t stride, Padding pad,
                        ActivationKind act);
  static LayerSpec pool(LayerKind kind, std::size_t k, std::size_t stride, Padding pad,
                        ActivationKind act);
  static LayerSpec dropout(double keep_prob);
  static LayerSpec flatten();

  bool has_weights() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2D; }
  /// Throws ConfigError for invalid extents or keep probability.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  std::string name;  ///< e.g. "MLP(4)", "SAE", "LeNetS", "ConvPool(100)"
  Architecture architecture = Architecture::MLP;
  Family family = Family::BRU;
  Shape input_shape;  ///< per sample, [h, w, maps]
  /// Ordered layers; the last one is the dense output layer (Softmax or Sigmoid).
  std::vector<LayerSpec> layers;

  ActivationKind output_activation() const { return *layers.back().activation; }
  /// Activations of every non-output layer that carries one, in order.
  std::vector<ActivationKind> hidden_activations() const;
  /// Activations of the dense/convolution hidden layers only.
  std::vector<ActivationKind> weight_layer_activations() const;

  /// Per-sample output shape of every layer, starting with the input.
  std::vector<Shape> shape_trace() const;
  /// Number of trainable scalars (weights and biases).
  std::size_t parameter_count() const;

  /// One layer per line: kind, size, kernel, stride, padding, activation, radix.
  std::string serialize() const;
  static ModelSpec parse(const std::string& text);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// 784 -> 128 x depth -> 10 softmax, depth in 4..8.
/// BRU: first hidden O3RU, last hidden E2RU, the rest O2RU.
ModelSpec build_mlp(int depth, Family family);

/// 784 -> 1000-500-250-30-250-500-1000 -> 784 sigmoid, untied weights.
/// BRU: O2RU for the first six hidden layers, E1RU for the last.
ModelSpec build_sae(Family family);

/// Simplified LeNet with same padding throughout and activated average pools.
/// BRU: convolutions and dense84 get E3RU, O2RU, O2RU, E2RU; pools get E1RU.
ModelSpec build_lenet(Family family);

/// Ten-layer ConvPool network for CIFAR with dropout 0.5 after each max
/// pool and a dense softmax head of `classes` units. `conv9_maps` is the
/// width of the ninth layer (10 as written for both datasets).
ModelSpec build_convpool(int classes, Family family, std::size_t conv9_maps = 10);

}  // namespace bru
