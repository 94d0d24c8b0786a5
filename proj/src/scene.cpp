#include "rvdr/scene.hpp"

#include "rvdr/errors.hpp"

namespace rvdr {

void SceneRecord::validate() const {
    intrinsics.validate();
    const int h = intrinsics.height, w = intrinsics.width;
    if (rgb.height != h || rgb.width != w || depth_raw.height != h || depth_raw.width != w ||
        depth_gt.height != h || depth_gt.width != w || object_mask.height != h ||
        object_mask.width != w || hand_mask.height != h || hand_mask.width != w)
        throw DataError("scene record: shape mismatch");
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            if (object_mask.at(v, u) && hand_mask.at(v, u))
                throw DataError("scene record: overlapping masks");
            if ((object_mask.at(v, u) || hand_mask.at(v, u)) && !(depth_gt.at(v, u) > 0))
                throw DataError("scene record: masked pixel without ground-truth depth");
        }
    }
}

}  // namespace rvdr
