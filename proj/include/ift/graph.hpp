#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ift/tensor.hpp"

namespace ift {

template <typename S>
struct Node {
  const char* op;
  std::vector<Tensor<S>> inputs;  // kept alive for the backward pass
  Tensor<S> output;
  std::function<void()> backward;
};

// Reverse-mode tape. Ops record onto the active graph (a thread-local,
// scalar-type-specific slot) whenever any input is tracked; backward replays
// the records in exact reverse execution order. One graph serves one training
// step at a time.
template <typename S>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph() {
    if (active_ == this) active_ = nullptr;
  }

  class Activation {
   public:
    explicit Activation(Graph* g) : prev_(active_) { active_ = g; }
    ~Activation() { active_ = prev_; }
    Activation(const Activation&) = delete;
    Activation& operator=(const Activation&) = delete;

   private:
    Graph* prev_;
  };

  // Temporarily disables recording (used by eval paths inside a step scope).
  class Pause {
   public:
    Pause() : prev_(active_) { active_ = nullptr; }
    ~Pause() { active_ = prev_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Graph* prev_;
  };

  [[nodiscard]] Activation activate() { return Activation(this); }

  static Graph* active() { return active_; }

  void record(const char* op, std::vector<Tensor<S>> inputs, Tensor<S> output,
              std::function<void()> backward) {
    nodes_.push_back(Node<S>{op, std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and walks the tape backwards. Nodes whose
  // output never received a gradient are skipped.
  void backward(Tensor<S> loss) {
    require(loss.defined() && loss.numel() == 1,
            "backward: loss must be a scalar tensor");
    require(!ran_backward_, "backward called twice without reset");
    ran_backward_ = true;
    loss.grad()[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward();
    }
  }

  void reset() {
    nodes_.clear();
    ran_backward_ = false;
  }

 private:
  std::vector<Node<S>> nodes_;
  bool ran_backward_ = false;
  static thread_local Graph* active_;
};

template <typename S>
thread_local Graph<S>* Graph<S>::active_ = nullptr;

// True when an op with these inputs must be recorded.
template <typename S, typename... Ts>
bool tracking(const Ts&... inputs) {
  if (Graph<S>::active() == nullptr) return false;
  return (... || inputs.requires_grad());
}

template <typename S>
void backward(const Tensor<S>& loss) {
  require(Graph<S>::active() != nullptr, "backward: no active graph");
  Graph<S>::active()->backward(loss);
}

}  // namespace ift
