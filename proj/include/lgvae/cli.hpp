#pragma once

// Command-line front end. Exit codes: 0 success, 1 IO failure, 2 validation
// failure, 3 numerical abort.

#include <iosfwd>
#include <string>
#include <vector>

namespace lgvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

/// Environment variable that overrides the master seed of `train`.
inline constexpr const char* kSeedEnv = "LGVAE_SEED";

/// Runs one command. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lgvae::cli
