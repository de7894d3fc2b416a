#pragma once

// Deterministic fake encoder for tests: closed-form outputs computable by
// hand, with an optional position-agnostic mode for permutation checks.

#include <cstddef>
#include <vector>

#include "gega/encoder.hpp"
#include "gega/tensor.hpp"

namespace gega::testing {

class StubEncoder : public ContextEncoder {
 public:
  StubEncoder(std::size_t d_model, std::size_t heads, std::size_t window,
              bool position_agnostic = false)
      : d_(d_model), heads_(heads), window_(window),
        position_agnostic_(position_agnostic) {}

  std::size_t d_model() const override { return d_; }
  std::size_t num_heads() const override { return heads_; }
  std::size_t max_window() const override { return window_; }

  double h_value(std::size_t token_id, std::size_t pos, std::size_t col) const {
    const double p = position_agnostic_ ? 0.0 : static_cast<double>(pos);
    return 0.001 * static_cast<double>(token_id) + 1.0 * p +
           0.01 * static_cast<double>(col);
  }

  // Unnormalized attention weight; rows are normalized inside encode.
  double a_weight(std::size_t head, std::size_t i, std::size_t j) const {
    if (position_agnostic_) return 1.0;
    return 1.0 + static_cast<double>((7 * i + 13 * j + 3 * head) % 5);
  }

  EncoderOutput encode(Tape& tape,
                       const std::vector<std::size_t>& ids) override {
    const std::size_t n = ids.size();
    if (n == 0 || n > window_)
      throw TensorError("stub encode: bad sequence length");
    Tensor h = Tensor::zeros({n, d_});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d_; ++c)
        h.at(i, c) = h_value(ids[i], i, c);
    EncoderOutput out;
    out.h = h;
    for (std::size_t hd = 0; hd < heads_; ++hd) {
      Tensor a = Tensor::zeros({n, n});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a.at(i, j) = a_weight(hd, i, j);
      out.head_attn.push_back(tape.normalize_rows(a));
    }
    return out;
  }

 private:
  std::size_t d_, heads_, window_;
  bool position_agnostic_;
};

}  // namespace gega::testing
