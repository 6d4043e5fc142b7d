#pragma once

#include <string>

#include "mfsb/sde.hpp"

namespace mfsb {

// Renders the three standard figures for a scenario into `out_dir`:
//   setup.svg        source/target distributions and obstacle outlines
//   trajectories.svg one polyline per sample with obstacles overlaid
//   terminal.svg     terminal-state scatter over the target layout
// Pure scatter/polyline SVG with a fixed world-coordinate viewBox derived
// from the problem bounds. Obstacle outlines carry class="obstacle", sample
// paths class="path", scatter points class="pt". Throws when a file cannot
// be written. An empty batch (n_samples == 0) is allowed and produces a
// trajectory plot with zero polylines.
void export_plots(const TrajectoryBatch& batch, const ProblemSpec& spec,
                  const std::string& out_dir);

}  // namespace mfsb
