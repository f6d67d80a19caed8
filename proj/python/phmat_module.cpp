#include <pybind11/pybind11.h>
PYBIND11_MODULE(_phmat, m) { m.doc() = "parametric hierarchical kernel matrices"; }
