#pragma once

// The numeric core (tensor, schedule, pfode, model, losses) is compiled twice:
// once with 32-bit floats for everything the tools run, and once with doubles
// for the finite-difference gradient oracle. Each build lives in its own inline
// namespace so both can be linked into one binary.

#ifndef GTASR_USE_DOUBLE
#define GTASR_USE_DOUBLE 0
#endif

#if GTASR_USE_DOUBLE
#define GTASR_NS_BEGIN inline namespace f64 {
#else
#define GTASR_NS_BEGIN inline namespace f32 {
#endif
#define GTASR_NS_END }

namespace gtasr {
GTASR_NS_BEGIN

#if GTASR_USE_DOUBLE
using real = double;
#else
using real = float;
#endif

GTASR_NS_END
}  // namespace gtasr
