#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "griduq/random.hpp"
#include "griduq/tensor.hpp"

namespace griduq {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode tape. Ops are appended in execution order; backward walks
/// them in exact reverse order. One tape per forward pass and per thread.
class Tape {
 public:
  /// Receives the gradient of the op's output and accumulates into its
  /// inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, std::span<const float>)>;

  /// With record_gradients=false no backward rules are kept (inference).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf bound to an externally owned tensor; after backward() its
  /// gradient is accumulated into t.grad() when t.requires_grad().
  Var parameter(Tensor& t);
  /// Leaf referencing a tensor that never receives gradients (frozen
  /// weights at inference). The tensor must outlive the tape.
  Var constant_ref(const Tensor& t);
  Var constant(Tensor t);
  /// Owned leaf; gradient readable through grad().
  Var variable(Tensor t);

  const Tensor& value(Var v) const;
  /// Gradient buffer of v, empty when nothing flowed into it.
  std::span<const float> grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var conv2d(Var x, Var weight, Var bias, int stride, int padding);
  /// weight [Cin,Cout,k,k]; no padding.
  Var conv_transpose2d(Var x, Var weight, Var bias, int stride);
  /// Non-overlapping k x k max pool. Optional argmax receives the flat
  /// input index chosen for each output element.
  Var maxpool2d(Var x, int k = 2, std::vector<int>* argmax = nullptr);
  Var relu(Var x);
  Var softplus(Var x);
  Var exp(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_scalar(Var x, float c);
  Var concat_channels(Var a, Var b);
  Var slice_channels(Var x, int begin, int count);
  /// Zero-pads the bottom/right of the spatial axes up to (h, w).
  Var pad_to(Var x, int h, int w);
  /// Keeps the top-left (h, w) window of the spatial axes.
  Var crop_to(Var x, int h, int w);
  /// Inverted dropout; identity when !active or p == 0 (no draws made).
  Var dropout(Var x, float p, bool active, Rng& rng);
  Var sum(Var x);
  /// Mean over elements whose mask byte is nonzero.
  Var mean_masked(Var x, std::span<const std::uint8_t> mask);

  /// Appends a custom op. `fn` is dropped when no input requires grad.
  Var record(Tensor out, std::initializer_list<Var> inputs, BackwardFn fn);
  /// Zero-initialized gradient buffer of v for accumulation.
  std::span<float> accumulate(Var v);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  void backward(Var loss);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* grad_sink = nullptr;
    std::vector<float> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);

  bool recording_;
  std::deque<Node> nodes_;
};

}  // namespace griduq
