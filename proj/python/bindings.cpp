#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_rvdr, m) {
    m.doc() = "ray-voxel depth restoration core";
}
