#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lpvae/core/tensor.hpp"

namespace lpvae::maskconv {

enum class MaskKind { A, B, None };
enum class PlanStyle { Single, Stacked };

// Horizon value meaning "depth-limited raster cone", not a finite window.
constexpr int kFullHorizon = -1;

// Raster-order mask for a kh x kw kernel: ones strictly above the center row
// and, in the center row, strictly left of center; the center itself is one
// iff kind B. Everything below/right of center is zero.
Tensor build_mask(int64_t kh, int64_t kw, MaskKind kind);

// Structural description of the spatial convolution stack of a pixel module.
// `layers` lists every conv in order; `skips` are residual connections that
// add the input of layers[first] to the output of layers[second].
struct MaskPlan {
  struct Layer {
    int64_t kh = 1, kw = 1;
    MaskKind kind = MaskKind::None;
  };
  std::vector<Layer> layers;
  std::vector<std::pair<int, int>> skips;
  int horizon = 0;
  PlanStyle style = PlanStyle::Stacked;

  int masked_layer_count() const;
  bool is_full() const { return horizon == kFullHorizon; }
  // One-line structural summary for manifests, parseable by parse_plan.
  std::string describe() const;
  // Checks mask-ordering invariants (first masked layer A, later ones B, odd
  // kernels, single-style kernel sizing).
  void validate() const;
};

// Local plan with dependency horizon h >= 0. Single style uses one k x k
// type-A layer with k = 2h+1; stacked style uses h masked 3x3 layers. Both
// append a 1x1 type-B fuse layer and `n_res_blocks` residual blocks of two
// 1x1 convolutions.
MaskPlan plan_local(int horizon, PlanStyle style, int n_res_blocks = 5);

// Unrestricted raster cone: `n_masked` masked 3x3 layers (A then B) followed
// by residual blocks whose convolutions are masked 3x3 type B.
MaskPlan plan_full(int n_masked = 2, int n_res_blocks = 5);

// Exact set of input pixels that can influence output (i, j), by symbolic
// propagation of the masks (residual skips included). Coordinates are (row,
// col) pairs in raster order, deduplicated.
std::vector<std::pair<int, int>> receptive_field(const MaskPlan& plan, int64_t H, int64_t W,
                                                 int64_t i, int64_t j);

// The horizon-h local context window: rows i-h..i-1 across columns j-h..j+h,
// plus row i columns j-h..j-1, clipped to bounds.
std::vector<std::pair<int, int>> local_window(int h, int64_t H, int64_t W, int64_t i, int64_t j);

MaskPlan parse_plan(const std::string& described);

}  // namespace lpvae::maskconv
