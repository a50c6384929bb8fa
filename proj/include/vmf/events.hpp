#pragma once

#include "vmf/types.hpp"

namespace vmf {

/// Splits the stream's window into `slice_count` equal sub-intervals and
/// accumulates polarity * threshold per pixel per slice. Events landing
/// exactly on an interior boundary go to the earlier slice. A zero-length
/// window degenerates to slice 0.
EventVoxelGrid voxelize_events(const EventStream& ev, int slice_count, double threshold);

}  // namespace vmf
