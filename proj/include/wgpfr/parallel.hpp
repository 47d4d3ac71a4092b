#pragma once

namespace wgpfr {

/// Selects between the OpenMP kernel and its serial reference. Both produce
/// bitwise-identical results; the serial path exists for tests and benchmarks.
enum class Exec { Serial, Parallel };

}  // namespace wgpfr
