#include "vmf/events.hpp"

#include <cmath>

namespace vmf {

EventVoxelGrid voxelize_events(const EventStream& ev, int slice_count, double threshold) {
    if (slice_count < 1) throw InputError("voxelize_events: slice count must be >= 1");
    if (!(threshold > 0.0)) throw InputError("voxelize_events: threshold must be > 0");
    ev.validate();

    EventVoxelGrid grid;
    grid.width = ev.width;
    grid.height = ev.height;
    grid.slice_count = slice_count;
    grid.threshold = threshold;
    const std::size_t n = static_cast<std::size_t>(ev.width) * static_cast<std::size_t>(ev.height);
    grid.counts.assign(static_cast<std::size_t>(slice_count), std::vector<std::int64_t>(n, 0));

    const double span = ev.t_end - ev.t_begin;
    for (const Event& e : ev.events) {
        int slice = 0;
        if (span > 0.0 && e.t > ev.t_begin) {
            const double frac = (e.t - ev.t_begin) / span * static_cast<double>(slice_count);
            slice = static_cast<int>(std::ceil(frac)) - 1;
            slice = std::min(slice_count - 1, std::max(0, slice));
        }
        grid.counts[static_cast<std::size_t>(slice)][static_cast<std::size_t>(e.y) * ev.width + e.x] += e.p;
    }

    grid.slices.reserve(static_cast<std::size_t>(slice_count));
    for (int s = 0; s < slice_count; ++s) {
        Image img = Image::make(ev.width, ev.height, 1, Semantics::Intensity);
        for (std::size_t i = 0; i < n; ++i)
            img.data[i] = static_cast<double>(grid.counts[static_cast<std::size_t>(s)][i]) * threshold;
        grid.slices.push_back(std::move(img));
    }
    return grid;
}

}  // namespace vmf
