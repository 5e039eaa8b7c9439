#pragma once

#include <string>
#include <vector>

#include "headgan/tensor.hpp"

namespace headgan::preview {

/// Tiles same-shape (3,H,W) images in [0,1] into ceil(N/cols) rows with
/// 2-pixel separators.
Tensor make_grid(const std::vector<Tensor>& images, int cols);

/// Renders the "step\tname\tvalue" loss log as one plot: each series gets a
/// palette color and is normalized to its own [min,max] band; a legend with
/// a tiny bitmap font names the series. Empty or unparseable logs raise
/// DataError("nothing to plot").
Tensor plot_loss_curves(const std::string& log_path);

}  // namespace headgan::preview
