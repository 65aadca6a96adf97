#pragma once

namespace musreg {

/// Worker threads for parallel loops over voxels, frames and slices. 0
/// selects the hardware concurrency. Results never depend on this setting.
void set_worker_threads(int count);
int worker_threads();

}  // namespace musreg
