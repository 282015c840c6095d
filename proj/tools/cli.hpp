#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace foodcal::cli {

inline constexpr const char* kVersion = "0.1.0";
// Default output directory when neither --out nor the config file sets one.
inline constexpr const char* kOutDirEnv = "FOODCAL_OUT_DIR";
inline constexpr const char* kFallbackOutDir = "foodcal_out";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace foodcal::cli
