#pragma once

#include "attnioc/simulator.hpp"

#include <string>

namespace attnioc {

/// Decimal text that parses back to the same double (17 significant digits).
std::string format_double(double v);

/// Writes `<path>` (one row per step) and `<path>.meta.json`.
/// When the metadata carries theta, a reward column theta . phi is included.
void write_dataset(const Dataset& data, const std::string& path);

/// Reads a dataset written by write_dataset; throws std::runtime_error on malformed input.
Dataset read_dataset(const std::string& path);

}  // namespace attnioc
