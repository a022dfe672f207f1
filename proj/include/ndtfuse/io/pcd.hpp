#pragma once

#include <filesystem>

#include "ndtfuse/types.hpp"

namespace ndtfuse::io {

/// ASCII PCD v0.7 subset: FIELDS x y z, DATA ascii. Header layout is fixed
/// byte-for-byte; coordinates carry 8 significant digits.
void write_pcd(const std::filesystem::path& path, const PointCloud& cloud);

/// Reads the subset written by write_pcd (tolerating other PCD v0.7 ascii
/// files with x y z as the first fields). Throws IoFailure on malformed input.
PointCloud read_pcd(const std::filesystem::path& path);

}  // namespace ndtfuse::io
