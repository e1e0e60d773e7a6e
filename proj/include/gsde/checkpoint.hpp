#pragma once

#include <string>

#include "gsde/model.hpp"

namespace gsde {

/// Text checkpoint: "GSDE1" magic line, a dims line, then one named
/// parameter block per weight/bias matrix with shape and 17-significant-
/// digit values, so save/load round-trips bitwise.
void save_checkpoint(const GsdeModel& m, const std::string& path);
GsdeModel load_checkpoint(const std::string& path);

}  // namespace gsde
