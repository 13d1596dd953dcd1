#pragma once

#include "kff/kernels.hpp"

namespace kff::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(KFF_WITH_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace kff::kernels::detail
