#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccfpse/tensor.hpp"

namespace ccfpse {

enum class InitScheme {
  kHeNormal,   // N(0, 2 / fan_in), times the record's scale
  kEmbedding,  // N(0, 0.02^2)
  kZeros,
  kOnes,
};

const char* init_scheme_name(InitScheme scheme);

template <typename T>
struct ParamRecord {
  std::string name;
  Tensor<T> tensor;
  InitScheme init = InitScheme::kZeros;
  std::int64_t fan_in = 1;
  double scale = 1.0;
};

/// Named trainable tensors plus non-trainable buffers (running statistics).
/// Iteration follows insertion order; names are unique across both lists.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, InitScheme init, std::int64_t fan_in = 1, double scale = 1.0);
  Tensor<T> add_buffer(const std::string& name, Shape shape, T fill);

  bool contains(const std::string& name) const;
  const Tensor<T>& get(const std::string& name) const;

  const std::vector<ParamRecord<T>>& params() const noexcept { return params_; }
  const std::vector<ParamRecord<T>>& buffers() const noexcept { return buffers_; }

  std::int64_t total_param_count() const;
  /// Summed element count of parameters whose name starts with `prefix`.
  std::int64_t param_count(const std::string& prefix) const;

  /// Allocates (if needed) and zeroes every parameter grad.
  void zero_grad() const;
  /// Toggles requires_grad on all parameters; frozen parameters are not recorded.
  void set_trainable(bool trainable) const;

 private:
  void claim(const std::string& name);

  std::vector<ParamRecord<T>> params_;
  std::vector<ParamRecord<T>> buffers_;
  std::unordered_map<std::string, std::pair<bool, std::size_t>> index_;
};

/// Re-draws every parameter from its recorded scheme. Deterministic in `seed`
/// and in the store's insertion order.
template <typename T>
void init_params(ParamStore<T>& store, std::uint64_t seed);

enum class Mode { kTrain, kEval };

/// Running statistics of a batch-norm layer. `count` is a 1-element buffer
/// holding the number of batches folded in; zero means "never populated".
template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
  Tensor<T> count;
  double momentum = 0.1;
};

/// Per-channel normalization over (N,H,W). Train mode uses batch statistics
/// and folds them into `stats`; eval mode uses `stats` and throws StateError if
/// they were never populated. `gamma`/`beta` may be undefined (no affine).
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                     RunningStats<T>& stats, T eps = T(1e-5));

/// Per-(sample, channel) normalization over (H,W). A 1x1 plane normalizes to
/// zero, so the output there is beta.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int pad = 0;

  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Registers `<name>.weight` [out,in,k,k] (He-normal, times `scale`) and,
/// when `with_bias`, a zero `<name>.bias`.
template <typename T>
Conv2dLayer<T> make_conv(ParamStore<T>& store, const std::string& name, std::int64_t in, std::int64_t out,
                         int kernel, int stride = 1, double scale = 1.0, bool with_bias = true);

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  RunningStats<T> stats;

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) { return batch_norm(x, gamma, beta, mode, stats); }
};

/// Registers gamma/beta (when `affine`) and running mean/var/count buffers.
template <typename T>
BatchNormLayer<T> make_batch_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels,
                                  bool affine = true, double momentum = 0.1);

template <typename T>
struct InstanceNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;

  Tensor<T> operator()(const Tensor<T>& x) const { return instance_norm(x, gamma, beta); }
};

template <typename T>
InstanceNormLayer<T> make_instance_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers aligned with a store's parameter order.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  AdamState(const ParamStore<T>& store, AdamConfig cfg);
};

/// One bias-corrected Adam update in place. Grads are left untouched.
/// Throws ContractError if any parameter has no grad buffer.
template <typename T>
void adam_step(const ParamStore<T>& store, AdamState<T>& state);

}  // namespace ccfpse
