#pragma once

#include <filesystem>
#include <string>

#include "dmdd/common.hpp"

namespace testutil {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dmdd_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_err(const dmdd::CVector& a, const dmdd::CVector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace testutil
