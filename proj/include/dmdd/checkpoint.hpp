#pragma once

#include <string>

#include "dmdd/unet.hpp"

namespace dmdd {

inline constexpr int kCheckpointFormatVersion = 1;

/// JSON header line (architecture, schedule, training metadata, tensor
/// table, CRC32 of the payload) followed by little-endian float32 parameters.
void save_checkpoint(const ConvScoreNet& net, const std::string& path);

/// `expected_length` > 0 rejects networks built for another signal length.
ConvScoreNet load_checkpoint(const std::string& path, Eigen::Index expected_length = 0);

}  // namespace dmdd
