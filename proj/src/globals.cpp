#include "htn/kernels.hpp"
#include "htn/tensor.hpp"

namespace htn {

namespace kern {

namespace {
#ifdef _OPENMP
Backend g_backend = Backend::Parallel;
#else
Backend g_backend = Backend::Serial;
#endif
}  // namespace

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }
const char* backend_name(Backend b) { return b == Backend::Serial ? "serial" : "openmp"; }

}  // namespace kern

namespace {
bool g_grad_enabled = true;
bool g_finite_checks = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool on) { g_finite_checks = on; }

}  // namespace htn
