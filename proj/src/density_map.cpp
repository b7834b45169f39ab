#include "cryosamu/density_map.hpp"

#include <cmath>
#include <string>

namespace cryosamu {

void DensityMap::validate() const {
    for (int i = 0; i < 3; ++i) {
        if (dims[i] < 1)
            throw numeric_error("map dims must be >= 1, got axis " + std::to_string(i) +
                                " = " + std::to_string(dims[i]));
        double v = voxel_size[i];
        if (!(v > 0.0) || !std::isfinite(v))
            throw numeric_error("voxel size must be positive and finite on axis " +
                                std::to_string(i));
    }
    if (static_cast<int64_t>(data.size()) != size())
        throw numeric_error("map data length " + std::to_string(data.size()) +
                            " does not match dims product " + std::to_string(size()));
    for (size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw numeric_error("non-finite density at linear index " + std::to_string(i));
    }
}

}  // namespace cryosamu
